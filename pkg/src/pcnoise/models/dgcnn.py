"""Dynamic-graph edge-convolution classifier.

Each edge-conv layer rebuilds a K-nearest-neighbor graph in its *own*
input feature space (that recomputation is what makes the graph dynamic),
turns every directed edge (i -> j) into the feature concat(x_i, x_j - x_i),
pushes edges through a shared linear + batch norm + relu, and max-reduces
each point's K edges back to a point feature.  Layer outputs are
concatenated, embedded, max-pooled and classified by a small head.

The edge tensor is the hot loop of training, so the layer keeps it in a
channel-major (F, N, K) layout inside persistent buffers and exploits two
identities: the edge linear map W concat(x_i, x_j - x_i) + b equals
(W1 - W2) x_i + W2 x_j + b, and max-then-relu equals relu-then-max, with
identical routed gradients.  Numerics match the naive composition of
edge_features + pointwise linear + batch norm + relu + max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.layers import BatchNorm, GlobalMaxPool, Linear, Param, ReLU, glorot_uniform
from ._edge_ops import dist_finish, edge_backward_reduce, edge_pre_stats, edge_select


@dataclass(frozen=True)
class DgcnnConfig:
    input_dim: int
    k_neighbors: int = 10
    edge_widths: tuple[int, ...] = (64, 64, 128, 256)
    embed_width: int = 1024
    head_widths: tuple[int, ...] = (512, 256, 2)
    init_seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not self.edge_widths:
            raise ValueError("edge_widths must be nonempty")
        if self.head_widths[-1] != 2:
            raise ValueError(f"last head width must be 2, got {self.head_widths[-1]}")


def pairwise_sq_dists(features: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Full (N, N) squared euclidean distance matrix with +inf diagonal."""
    sq = np.einsum("nf,nf->n", features, features)
    # an explicitly contiguous second operand keeps the gram product on the
    # fast BLAS path; the transpose-view form is ~2x slower here
    ft = np.ascontiguousarray(features.T)
    g = np.matmul(features, ft, out=out)
    return dist_finish(g, sq)


def knn_graph(
    features: np.ndarray,
    k: int,
    workspace: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Indices of the K nearest other points per row, by (distance, index).

    Exhaustive squared distances decide; exact ties are broken toward the
    smaller point index, and each output row is sorted by (distance, index)
    ascending.  Deterministic for any input, including coincident points.
    ``workspace`` may supply two (N, N) float64 scratch buffers.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= K < N, got K={k}, N={n}")
    if workspace is not None:
        d_buf, p_buf = workspace
    else:
        d_buf = np.empty((n, n))
        p_buf = np.empty((n, n))
    d = pairwise_sq_dists(features, out=d_buf)
    # the kth smallest distance per row bounds the neighbor set
    np.copyto(p_buf, d)
    p_buf.partition(k - 1, axis=1)
    dstar = p_buf[:, k - 1].copy()
    below = d < dstar[:, None]
    at = d == dstar[:, None]
    need = k - below.sum(axis=1)
    if (at.sum(axis=1) == need).all():
        sel = below | at
    else:
        # boundary ties: keep the lowest-index entries equal to dstar
        sel = below | (at & (np.cumsum(at, axis=1) <= need[:, None]))
    idx = (np.flatnonzero(sel) % n).reshape(n, k)  # index-sorted within each row
    order = np.argsort(np.take_along_axis(d, idx, axis=1), axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)


def edge_features(features: np.ndarray, graph: np.ndarray) -> np.ndarray:
    """Edge tensor (N, K, 2F): slot (i, j) holds concat(x_i, x_neighbor - x_i)."""
    n, f = features.shape
    if graph.ndim != 2 or graph.shape[0] != n:
        raise ValueError(f"graph shape {graph.shape} inconsistent with N={n}")
    if graph.size and (graph.min() < 0 or graph.max() >= n):
        raise IndexError("graph contains out-of-range point indices")
    k = graph.shape[1]
    out = np.empty((n, k, 2 * f))
    out[:, :, :f] = features[:, None, :]
    out[:, :, f:] = features[graph] - features[:, None, :]
    return out


class EdgeConv:
    """One edge-convolution block: KNN graph, shared edge MLP, per-point max."""

    def __init__(self, in_dim: int, out_dim: int, name: str = "edge"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Param(f"{name}.weight", np.zeros((out_dim, 2 * in_dim)))
        self.bias = Param(f"{name}.bias", np.zeros(out_dim))
        self.bn = BatchNorm(out_dim, name=f"{name}.bn")
        self._buf = np.empty(0)  # (F, N, K) edge workspace, reused across passes
        self._dist_ws: tuple[np.ndarray, np.ndarray] | None = None
        self._cache = None

    def init(self, rng: np.random.Generator) -> None:
        self.weight.value[...] = glorot_uniform(
            rng, (self.out_dim, 2 * self.in_dim), 2 * self.in_dim, self.out_dim
        )
        self.bias.value[...] = 0.0

    def _workspace(self, n: int, k: int) -> np.ndarray:
        if self._buf.shape != (self.out_dim, n, k):
            self._buf = np.empty((self.out_dim, n, k))
        if self._dist_ws is None or self._dist_ws[0].shape != (n, n):
            self._dist_ws = (np.empty((n, n)), np.empty((n, n)))
        return self._buf

    def forward(self, x: np.ndarray, k: int, train: bool) -> np.ndarray:
        n = x.shape[0]
        buf = self._workspace(n, k)
        graph = knn_graph(x, k, workspace=self._dist_ws)

        w1 = self.weight.value[:, : self.in_dim]
        w2 = self.weight.value[:, self.in_dim:]
        pt = (w1 - w2) @ x.T
        pt += self.bias.value[:, None]
        qt = np.ascontiguousarray(w2 @ x.T)
        s, ss = edge_pre_stats(qt, pt, graph, buf)  # buf holds edge pre-activations

        m = n * k
        if train:
            mean = s / m
            var = np.maximum(ss / m - mean * mean, 0.0)
            bn = self.bn
            bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean
            bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var
        else:
            mean = self.bn.running_mean
            var = self.bn.running_var
        inv_std = 1.0 / np.sqrt(var + self.bn.eps)
        am, xsel, y = edge_select(buf, mean, inv_std, self.bn.gamma.value, self.bn.beta.value)
        self._cache = (x, graph, am, xsel, y, mean, inv_std, train)
        return np.ascontiguousarray(y.T)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x, graph, am, xsel, y, mean, inv_std, train = self._cache
        n = x.shape[0]
        m = n * graph.shape[1]
        gamma = self.bn.gamma.value

        dz = np.where(y.T > 0.0, grad, 0.0).T  # (F, N), relu backward at selected slots
        dz = np.ascontiguousarray(dz)
        sum_dz = dz.sum(axis=1)
        sum_dz_xhat = np.einsum("fn,fn->f", dz, xsel)
        self.bn.gamma.grad += sum_dz_xhat
        self.bn.beta.grad += sum_dz

        # batch-norm backward folded per edge: the dense part is
        # c1 + c2*xhat, the max-selected slot additionally gets c0*dz
        c0 = gamma * inv_std
        if train:
            c1 = -(c0 / m) * sum_dz
            c2 = -(c0 / m) * sum_dz_xhat
        else:
            c1 = np.zeros_like(c0)
            c2 = np.zeros_like(c0)
        dsum, t = edge_backward_reduce(self._buf, graph, am, dz, mean, inv_std, c0, c1, c2)

        self.bias.grad += dsum.sum(axis=1)
        w1 = self.weight.value[:, : self.in_dim]
        w2 = self.weight.value[:, self.in_dim:]
        dw1 = dsum @ x
        self.weight.grad[:, : self.in_dim] += dw1
        self.weight.grad[:, self.in_dim:] += t @ x - dw1
        dxt = (w1 - w2).T @ dsum + w2.T @ t
        return np.ascontiguousarray(dxt.T)

    def params(self) -> list[Param]:
        return [self.weight, self.bias] + self.bn.params()

    @property
    def last_graph(self) -> np.ndarray:
        return self._cache[1]


class Dgcnn:
    tag = "dgcnn"

    def __init__(self, config: DgcnnConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        self.edges: list[EdgeConv] = []
        f_in = config.input_dim
        for i, width in enumerate(config.edge_widths):
            ec = EdgeConv(f_in, width, name=f"edge{i}")
            ec.init(rng)
            self.edges.append(ec)
            f_in = width
        concat_dim = sum(config.edge_widths)
        self.embed = Linear(concat_dim, config.embed_width, name="embed")
        self.embed.init(rng)
        self.embed_bn = BatchNorm(config.embed_width, name="embed.bn")
        self.embed_act = ReLU()
        self.pool = GlobalMaxPool()
        self.head: list[tuple[Linear, ReLU | None]] = []
        f_in = config.embed_width
        for i, width in enumerate(config.head_widths):
            lin = Linear(f_in, width, name=f"head{i}")
            lin.init(rng)
            last = i == len(config.head_widths) - 1
            self.head.append((lin, None if last else ReLU()))
            f_in = width
        self.last_graphs: list[np.ndarray] = []

    def forward(self, points: np.ndarray, mode: str = "eval") -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected (N, {self.config.input_dim}) cloud matrix, got {points.shape}"
            )
        k = self.config.k_neighbors
        if points.shape[0] <= k:
            raise ValueError(
                f"cloud has N={points.shape[0]} points but K={k}; reduce K below N"
            )
        train = mode == "train"
        x = points
        outs = []
        for ec in self.edges:
            x = ec.forward(x, k, train)
            outs.append(x)
        self.last_graphs = [ec.last_graph for ec in self.edges]
        c = np.concatenate(outs, axis=1)
        e = self.embed_act.forward(self.embed_bn.forward(self.embed.forward(c), train))
        g = self.pool.forward(e)
        for lin, act in self.head:
            g = lin.forward(g)
            if act is not None:
                g = act.forward(g)
        return g[0]

    def backward(self, dlogits: np.ndarray) -> None:
        g = np.asarray(dlogits, dtype=np.float64)[None, :]
        for lin, act in reversed(self.head):
            if act is not None:
                g = act.backward(g)
            g = lin.backward(g)
        g = self.pool.backward(g)
        dc = self.embed.backward(self.embed_bn.backward(self.embed_act.backward(g)))
        # split the concat gradient, then walk the edge chain right to left;
        # each layer's input grad joins the concat slice of the layer below
        splits = np.cumsum(self.config.edge_widths)[:-1]
        slices = np.split(dc, splits, axis=1)
        upstream = slices[-1]
        for i in range(len(self.edges) - 1, -1, -1):
            dx = self.edges[i].backward(upstream)
            if i > 0:
                upstream = slices[i - 1] + dx

    def predict(self, points: np.ndarray) -> int:
        """Class label from eval-mode logits; ties resolve to class 0."""
        logits = self.forward(points, mode="eval")
        return 1 if logits[1] > logits[0] else 0

    def parameters(self):
        out = []
        for ec in self.edges:
            out += ec.params()
        out += self.embed.params() + self.embed_bn.params()
        for lin, _ in self.head:
            out += lin.params()
        return out

    def buffers(self):
        out = []
        for ec in self.edges:
            out += ec.bn.buffers()
        out += self.embed_bn.buffers()
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[...] = 0.0

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def config_items(self) -> dict[str, str]:
        return {
            "input_dim": str(self.config.input_dim),
            "k_neighbors": str(self.config.k_neighbors),
            "edge_widths": ",".join(str(w) for w in self.config.edge_widths),
            "embed_width": str(self.config.embed_width),
            "head_widths": ",".join(str(w) for w in self.config.head_widths),
            "init_seed": str(self.config.init_seed),
        }

    @classmethod
    def from_config_items(cls, items: dict[str, str]) -> "Dgcnn":
        return cls(DgcnnConfig(
            input_dim=int(items["input_dim"]),
            k_neighbors=int(items["k_neighbors"]),
            edge_widths=tuple(int(w) for w in items["edge_widths"].split(",")),
            embed_width=int(items["embed_width"]),
            head_widths=tuple(int(w) for w in items["head_widths"].split(",")),
            init_seed=int(items["init_seed"]),
        ))
