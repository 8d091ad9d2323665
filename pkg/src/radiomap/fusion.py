"""Reference forward pass for bottleneck fusion: multi-head cross-attention
with a single global feature vector as the query and latent positions as keys
and values. Forward only — no training, no network integration; this module
pins the math so downstream ports can test against it."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError


@dataclass
class AttentionConfig:
    d_model: int
    n_heads: int
    d_radiomics: int
    w_query: np.ndarray   # (d_radiomics, d_model)
    w_key: np.ndarray     # (d_model, d_model)
    w_value: np.ndarray   # (d_model, d_model)
    w_out: np.ndarray     # (d_model, d_model)

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise UsageError(
                f"n_heads {self.n_heads} must divide d_model {self.d_model}")
        shapes = {
            "w_query": (self.d_radiomics, self.d_model),
            "w_key": (self.d_model, self.d_model),
            "w_value": (self.d_model, self.d_model),
            "w_out": (self.d_model, self.d_model),
        }
        for name, expected in shapes.items():
            mat = np.asarray(getattr(self, name), dtype=np.float64)
            if mat.shape != expected:
                raise UsageError(f"{name} must have shape {expected}, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise UsageError(f"{name} contains non-finite entries")
            setattr(self, name, mat)

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    @classmethod
    def seeded(cls, d_model=64, n_heads=4, d_radiomics=10, seed=0):
        """Gaussian init scaled by fan-in; fixture parameters, not a claim."""
        rng = np.random.default_rng(seed)

        def init(rows, cols):
            return rng.standard_normal((rows, cols)) / np.sqrt(rows)

        return cls(d_model, n_heads, d_radiomics,
                   init(d_radiomics, d_model), init(d_model, d_model),
                   init(d_model, d_model), init(d_model, d_model))

    def to_json_dict(self):
        """JSON-serializable form for golden-test fixtures."""
        return {
            "d_model": self.d_model, "n_heads": self.n_heads,
            "d_radiomics": self.d_radiomics,
            "w_query": self.w_query.tolist(), "w_key": self.w_key.tolist(),
            "w_value": self.w_value.tolist(), "w_out": self.w_out.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(int(data["d_model"]), int(data["n_heads"]),
                   int(data["d_radiomics"]),
                   np.array(data["w_query"]), np.array(data["w_key"]),
                   np.array(data["w_value"]), np.array(data["w_out"]))


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_attention_forward(radiomics, latent, cfg):
    """Single-query multi-head cross-attention.

    Returns (fused vector of length d_model, per-head attention weights of
    shape (n_heads, n_positions)).
    """
    radiomics = np.asarray(radiomics, dtype=np.float64)
    latent = np.asarray(latent, dtype=np.float64)
    if radiomics.shape != (cfg.d_radiomics,):
        raise UsageError(
            f"radiomics vector must have shape ({cfg.d_radiomics},), got {radiomics.shape}")
    if latent.ndim != 2 or latent.shape[1] != cfg.d_model:
        raise UsageError(
            f"latent must be (positions, {cfg.d_model}), got {latent.shape}")
    if latent.shape[0] < 1:
        raise DataError("latent must contain at least one position")

    n_pos = latent.shape[0]
    dh = cfg.d_head
    q = (radiomics @ cfg.w_query).reshape(cfg.n_heads, dh)
    k = (latent @ cfg.w_key).reshape(n_pos, cfg.n_heads, dh)
    v = (latent @ cfg.w_value).reshape(n_pos, cfg.n_heads, dh)

    # (n_heads, n_pos) logits: q_h . k_h(pos) / sqrt(d_head)
    logits = np.einsum("hd,phd->hp", q, k) / np.sqrt(dh)
    weights = softmax(logits, axis=1)
    heads = np.einsum("hp,phd->hd", weights, v)
    fused = heads.reshape(cfg.d_model) @ cfg.w_out
    return fused, weights


def multi_query_forward(queries, latent, cfg):
    """Generalization to several query vectors; returns stacked outputs.

    Shape contract only — the reference semantics are pinned by the
    single-query forward above, which this applies per row.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != cfg.d_radiomics:
        raise UsageError(
            f"queries must be (m, {cfg.d_radiomics}), got {queries.shape}")
    fused, weights = zip(*(cross_attention_forward(q, latent, cfg) for q in queries))
    return np.stack(fused), np.stack(weights)


def attn_invariant_suite(cfg, trials=100, seed=0, n_positions=(1, 2, 5, 16)):
    """Randomized checks of the attention forward pass.

    Per trial: head weights sum to 1 within 1e-6; output is invariant under a
    joint permutation of latent rows within 1e-9; scaling one latent row
    changes the output (non-degeneracy). Returns a pass/fail report.
    """
    if trials < 1:
        raise UsageError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    report = {"trials": trials, "weight_normalization": 0, "permutation_invariance": 0,
              "row_scaling_sensitivity": 0, "failures": []}
    for t in range(trials):
        n_pos = int(rng.choice(n_positions))
        radiomics = rng.standard_normal(cfg.d_radiomics)
        latent = rng.standard_normal((n_pos, cfg.d_model))

        fused, weights = cross_attention_forward(radiomics, latent, cfg)
        if np.all(np.abs(weights.sum(axis=1) - 1.0) <= 1e-6):
            report["weight_normalization"] += 1
        else:
            report["failures"].append((t, "weight_normalization"))

        perm = rng.permutation(n_pos)
        fused_p, _ = cross_attention_forward(radiomics, latent[perm], cfg)
        if np.all(np.abs(fused_p - fused) <= 1e-9):
            report["permutation_invariance"] += 1
        else:
            report["failures"].append((t, "permutation_invariance"))

        scaled = latent.copy()
        scaled[int(rng.integers(n_pos))] *= 3.0
        fused_s, _ = cross_attention_forward(radiomics, scaled, cfg)
        if not np.allclose(fused_s, fused, atol=1e-12):
            report["row_scaling_sensitivity"] += 1
        else:
            report["failures"].append((t, "row_scaling_sensitivity"))

    report["all_passed"] = not report["failures"]
    return report
