"""Multitask potential-outcomes network and Monte Carlo effect inference.

The network is a shared ReLU stack feeding two idiosyncratic heads, one per
treatment arm, each ending in a scalar identity output. At inference time the
propensity score of a subject sets a per-subject keep probability; repeated
stochastic forward passes under that schedule yield a distribution of effect
draws whose spread reflects how trustworthy the counterfactual is for that
subject.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import DropoutMask, MLPParams, bernoulli_mask, build_mlp, mlp_forward
from .propensity import (
    DropoutSchedule,
    PropensityModel,
    dropout_probability,
    predict_propensity,
)

DEFAULT_SHARED_WIDTHS = (200, 200)
DEFAULT_HEAD_WIDTHS: tuple[int, ...] = ()


@dataclass
class DCNParams:
    """Shared representation stack plus one outcome head per treatment arm.

    Every shared-layer output is a hidden activation of the full network, so
    dropout masks cover the whole shared stack; heads mask only their own
    hidden layers (none in the default single-layer heads).
    """

    shared: MLPParams
    head0: MLPParams
    head1: MLPParams

    def __post_init__(self):
        width = self.shared.output_dim
        for name, head in (("head0", self.head0), ("head1", self.head1)):
            if head.input_dim != width:
                raise ValueError(
                    f"{name} input width {head.input_dim} does not match shared output {width}"
                )
            if head.output_dim != 1:
                raise ValueError(f"{name} must end in a single output unit")
            if head.layers[-1].activation != "identity":
                raise ValueError(f"{name} must end in an identity output")

    @property
    def input_dim(self) -> int:
        return self.shared.input_dim

    def mask_widths(self) -> tuple[list[int], list[int], list[int]]:
        """Maskable widths: all shared-layer outputs, heads' hidden layers only."""
        return (
            [layer.fan_out for layer in self.shared.layers],
            self.head0.hidden_widths(),
            self.head1.hidden_widths(),
        )

    def copy(self) -> "DCNParams":
        return DCNParams(self.shared.copy(), self.head0.copy(), self.head1.copy())

    def to_dict(self) -> dict:
        return {
            "shared": self.shared.to_dict(),
            "head0": self.head0.to_dict(),
            "head1": self.head1.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DCNParams":
        return cls(
            MLPParams.from_dict(payload["shared"]),
            MLPParams.from_dict(payload["head0"]),
            MLPParams.from_dict(payload["head1"]),
        )


def build_dcn(
    input_dim: int,
    rng: np.random.Generator,
    shared_widths: Sequence[int] = DEFAULT_SHARED_WIDTHS,
    head_widths: Sequence[int] = DEFAULT_HEAD_WIDTHS,
) -> DCNParams:
    """Xavier-initialized network; draw order is shared, head0, head1."""
    if not shared_widths:
        raise ValueError("at least one shared layer is required")
    shared = build_mlp(
        (input_dim, *shared_widths), rng, hidden_activation="relu", output_activation="relu"
    )
    rep = shared.output_dim
    head0 = build_mlp((rep, *head_widths, 1), rng, output_activation="identity")
    head1 = build_mlp((rep, *head_widths, 1), rng, output_activation="identity")
    return DCNParams(shared, head0, head1)


@dataclass
class DcnMasks:
    """One dropout mask set per parameter group, drawn with a common keep_prob."""

    shared: DropoutMask
    head0: DropoutMask
    head1: DropoutMask


def sample_masks(
    keep_prob: float,
    widths: tuple[Sequence[int], Sequence[int], Sequence[int]],
    rng: np.random.Generator,
) -> DcnMasks:
    """Independent Bernoulli(keep_prob) mask vectors for every maskable layer.

    ``widths`` is the `DCNParams.mask_widths` triple. Draw order is shared
    layers first, then head0, then head1.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError("keep_prob must lie in (0, 1]; 0 would silence the network")
    shared_w, head0_w, head1_w = widths

    def draw(ws):
        return [bernoulli_mask(w, keep_prob, rng) for w in ws]

    return DcnMasks(
        DropoutMask(draw(shared_w), keep_prob),
        DropoutMask(draw(head0_w), keep_prob),
        DropoutMask(draw(head1_w), keep_prob),
    )


def dcn_forward(
    params: DCNParams,
    x: np.ndarray,
    masks: DcnMasks | None = None,
    head="both",
):
    """Evaluate the requested head(s); the shared stack runs exactly once.

    ``x`` may be a single feature vector (scalar results) or an (n, d) batch
    (length-n arrays). ``head`` is 0, 1, or "both" for a (y0, y1) pair.
    """
    if head not in (0, 1, "both"):
        raise ValueError('head must be 0, 1, or "both"')
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    rep, _ = mlp_forward(params.shared, rows, masks.shared if masks else None)

    def run_head(net, mask):
        out = mlp_forward(net, rep, mask)[0][:, 0]
        return float(out[0]) if single else out

    if head == 0:
        return run_head(params.head0, masks.head0 if masks else None)
    if head == 1:
        return run_head(params.head1, masks.head1 if masks else None)
    return (
        run_head(params.head0, masks.head0 if masks else None),
        run_head(params.head1, masks.head1 if masks else None),
    )


def predict_deterministic(params: DCNParams, x: np.ndarray):
    """Maskless point prediction: (y0, y1, y1 - y0)."""
    y0, y1 = dcn_forward(params, x, masks=None, head="both")
    return y0, y1, y1 - y0


@dataclass
class ITEEstimate:
    """Monte Carlo effect distribution for one subject."""

    samples: np.ndarray
    mean: float
    std: float
    quantiles: tuple[float, float]
    y0_mean: float
    y1_mean: float


def _summarize(t_samples: np.ndarray, y0: np.ndarray, y1: np.ndarray) -> ITEEstimate:
    # single-draw std is 0 by convention; a constant vector short-circuits so
    # pairwise-summation noise cannot produce a spurious nonzero spread
    constant = bool(np.all(t_samples == t_samples[0]))
    if len(t_samples) > 1 and not constant:
        std = float(np.std(t_samples, ddof=1))
    else:
        std = 0.0
    lo, hi = np.quantile(t_samples, (0.025, 0.975))
    return ITEEstimate(
        samples=t_samples,
        mean=float(t_samples[0]) if constant else float(np.mean(t_samples)),
        std=std,
        quantiles=(float(lo), float(hi)),
        y0_mean=float(np.mean(y0)),
        y1_mean=float(np.mean(y1)),
    )


def estimate_ite(
    params: DCNParams,
    prop: PropensityModel,
    schedule: DropoutSchedule,
    x: np.ndarray,
    n_samples: int = 100,
    rng: np.random.Generator | None = None,
) -> ITEEstimate:
    """Draw n_samples stochastic effect estimates for one subject.

    The subject's propensity score fixes keep_prob = 1 - dropout
    probability; each draw uses fresh independent masks for the shared
    stack and both heads. Inverted-dropout scaling is kept at inference so
    the Monte Carlo mean tracks the deterministic prediction.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("estimate_ite takes a single feature vector")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    keep = 1.0 - dropout_probability(predict_propensity(prop, x), schedule)
    if keep <= 0.0:
        raise ValueError("schedule yields keep probability 0 for this subject")
    widths = params.mask_widths()
    y0 = np.empty(n_samples)
    y1 = np.empty(n_samples)
    for m in range(n_samples):
        masks = sample_masks(keep, widths, rng)
        y0[m], y1[m] = dcn_forward(params, x, masks, head="both")
    return _summarize(y1 - y0, y0, y1)


def mc_ite_matrix(
    params: DCNParams,
    prop: PropensityModel,
    schedule: DropoutSchedule,
    X: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Effect draws for a whole batch: (n, n_samples), row i for subject i.

    Same schedule as `estimate_ite` but with per-row keep probabilities and
    per-row masks, one vectorized forward pass per Monte Carlo draw.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (subjects x features)")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    keep = 1.0 - dropout_probability(predict_propensity(prop, X), schedule)
    if np.any(keep <= 0.0):
        raise ValueError("schedule yields keep probability 0 for some subject")
    n = X.shape[0]
    shared_w, head0_w, head1_w = params.mask_widths()
    keep_col = keep[:, None]

    def draw(ws):
        return [bernoulli_mask((n, w), keep_col, rng) for w in ws]

    out = np.empty((n, n_samples))
    for m in range(n_samples):
        masks = DcnMasks(
            DropoutMask(draw(shared_w), keep),
            DropoutMask(draw(head0_w), keep),
            DropoutMask(draw(head1_w), keep),
        )
        y0, y1 = dcn_forward(params, X, masks, head="both")
        out[:, m] = y1 - y0
    return out
