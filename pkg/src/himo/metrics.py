"""Hierarchical-monotonicity metrics, Recall@K and the semantic stability index.

Conventions:

* HiMo@K for K > 3 is the Pearson correlation between subtext index and score,
  computed per caption and averaged over captions; degenerate (constant)
  sequences are excluded from the mean and counted.
* HiMo@2/3 is the percentage of captions whose scores strictly increase; a
  tie is a failure.
* Recall@K ranks ties by lower candidate index first.
"""

import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ValidationError

_SENTENCE_END = re.compile(r"(?<=[.!?])(?:\s+|$)")
SSI_EPS = 1e-9


@dataclass(frozen=True)
class SegmentedCaption:
    id: str
    sentences: tuple[str, ...]
    precomputed: bool = False

    def __post_init__(self):
        if len(self.sentences) < 1:
            raise ValidationError(f"caption {self.id!r} has no sentences")
        for s in self.sentences:
            if not s.strip():
                raise ValidationError(f"caption {self.id!r} has an empty sentence")


@dataclass(frozen=True)
class ScoreSequence:
    scores: tuple[float, ...]
    sample_id: str = ""

    @property
    def k(self) -> int:
        return len(self.scores)


@dataclass
class HiMoReport:
    per_sample: list[ScoreSequence] = field(default_factory=list)
    per_sample_pearson: list[float | None] = field(default_factory=list)
    himo_shallow: dict[int, float] = field(default_factory=dict)
    himo_k_mean: float | None = None
    n_degenerate: int = 0
    recall_at: dict[str, float] = field(default_factory=dict)
    ssi: float | None = None
    meta: dict = field(default_factory=dict)


def split_sentences(text: str) -> list[str]:
    """Split raw text after '.', '!' or '?' followed by whitespace or end."""
    return [p.strip() for p in _SENTENCE_END.split(text) if p and p.strip()]


def caption_from_text(caption_id: str, text: str) -> SegmentedCaption:
    return SegmentedCaption(caption_id, tuple(split_sentences(text)))


def segment_sizes(n: int, k: int) -> list[int]:
    """Sizes of K contiguous segments of n sentences.

    Every segment gets ``n // k``; the ``n % k`` leftover sentences go one
    each to the last segments (n=5, K=3 gives [1, 2, 2]).
    """
    if k < 2:
        raise ValidationError(f"K must be >= 2, got {k}")
    if n < k:
        raise ValidationError(f"caption has {n} sentences, fewer than K={k}")
    base, rem = divmod(n, k)
    return [base + (1 if i >= k - rem else 0) for i in range(k)]


def segment(caption: SegmentedCaption, k: int) -> list[str]:
    """Cumulative subtexts t_1..t_K; t_K is the whole caption."""
    try:
        sizes = segment_sizes(len(caption.sentences), k)
    except ValidationError as exc:
        raise ValidationError(f"caption {caption.id!r}: {exc}") from exc
    ends = np.cumsum(sizes)
    return [" ".join(caption.sentences[:e]) for e in ends]


def segment_groups(caption: SegmentedCaption, k: int) -> list[tuple[str, ...]]:
    """The K segments themselves (not cumulative)."""
    sizes = segment_sizes(len(caption.sentences), k)
    out, start = [], 0
    for size in sizes:
        out.append(caption.sentences[start:start + size])
        start += size
    return out


def _score_matrix(sequences, k=None) -> np.ndarray:
    rows = [np.asarray(s.scores if isinstance(s, ScoreSequence) else s, dtype=np.float64)
            for s in sequences]
    if not rows:
        return np.zeros((0, k or 0))
    lengths = {r.shape[0] for r in rows}
    if len(lengths) != 1:
        raise ValidationError(f"score sequences have mixed lengths {sorted(lengths)}")
    m = np.vstack(rows)
    if k is not None and m.shape[1] != k:
        raise ValidationError(f"score sequences have length {m.shape[1]}, expected K={k}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("score sequences contain non-finite values")
    return m


def himo_pearson(seq) -> float | None:
    """Pearson correlation between index k = 1..K and the scores.

    Defined for K > 3. Returns None for a constant (zero-variance) sequence.
    """
    m = _score_matrix([seq])
    if m.shape[1] <= 3:
        raise ValidationError(f"Pearson HiMo@K needs K > 3, got K={m.shape[1]}")
    r = _kernels.pearson_rows(m)[0]
    return None if np.isnan(r) else float(r)


def himo_pearson_batch(sequences) -> tuple[np.ndarray, np.ndarray]:
    """Per-sequence Pearson values and a mask of degenerate sequences."""
    m = _score_matrix(sequences)
    if m.shape[0] and m.shape[1] <= 3:
        raise ValidationError(f"Pearson HiMo@K needs K > 3, got K={m.shape[1]}")
    if m.shape[0] == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    r = _kernels.pearson_rows(m)
    bad = np.isnan(r)
    return np.where(bad, 0.0, r), bad


def himo_k_mean(sequences) -> tuple[float | None, int]:
    """Mean per-caption Pearson and the number of degenerate captions skipped."""
    r, bad = himo_pearson_batch(sequences)
    good = r[~bad]
    return (float(good.mean()) if good.size else None), int(bad.sum())


def himo_shallow(sequences, k: int) -> float:
    """Percentage of sequences with strictly increasing scores (K = 2 or 3)."""
    if k not in (2, 3):
        raise ValidationError(f"shallow HiMo@K is defined for K in (2, 3), got {k}")
    m = _score_matrix(sequences, k)
    if m.shape[0] == 0:
        raise ValidationError("no score sequences given")
    ok = _kernels.strictly_increasing_rows(m)
    return 100.0 * float(np.count_nonzero(ok)) / m.shape[0]


def recall_at_k(similarities, ground_truth, k: int) -> float:
    """Percentage of queries whose ground-truth candidate ranks in the top k."""
    sim = np.ascontiguousarray(similarities, dtype=np.float64)
    gt = np.ascontiguousarray(ground_truth, dtype=np.int64)
    if sim.ndim != 2:
        raise ValidationError(f"similarities must be 2-D, got shape {sim.shape}")
    nq, ng = sim.shape
    if gt.shape != (nq,):
        raise ValidationError(f"ground_truth must have shape ({nq},), got {gt.shape}")
    if k < 1 or k > ng:
        raise ValidationError(f"K must lie in [1, {ng}], got {k}")
    if nq == 0:
        raise ValidationError("no queries")
    if np.any(gt < 0) or np.any(gt >= ng):
        bad = int(np.flatnonzero((gt < 0) | (gt >= ng))[0])
        raise ValidationError(f"ground truth index out of range for query {bad}")
    if not np.all(np.isfinite(sim)):
        raise ValidationError("similarities contain non-finite values")
    ranks = _kernels.truth_ranks(sim, gt)
    return 100.0 * float(np.count_nonzero(ranks < k)) / nq


def ssi(ori, noised, return_skipped: bool = False):
    """Semantic stability index: mean relative score change, in percent.

    Terms whose original score has magnitude below 1e-9 are skipped (and
    counted); a sample whose terms are all skipped drops out of the average.
    """
    if len(ori) != len(noised):
        raise ValidationError(f"{len(ori)} original vs {len(noised)} noised samples")
    per_sample = []
    skipped = 0
    for i, (a, b) in enumerate(zip(ori, noised)):
        a = np.asarray(a.scores if isinstance(a, ScoreSequence) else a, dtype=np.float64)
        b = np.asarray(b.scores if isinstance(b, ScoreSequence) else b, dtype=np.float64)
        if a.shape != b.shape:
            raise ValidationError(f"sample {i}: {a.size} original vs {b.size} noised scores")
        keep = np.abs(a) >= SSI_EPS
        skipped += int(a.size - np.count_nonzero(keep))
        if np.any(keep):
            per_sample.append(float(np.mean(np.abs((a[keep] - b[keep]) / a[keep]))) * 100.0)
    value = float(np.mean(per_sample)) if per_sample else 0.0
    return (value, skipped) if return_skipped else value


def inject_noise(caption: SegmentedCaption, distractor: str, position: str = "random",
                 seed: int = 0) -> SegmentedCaption:
    """Insert a distractor sentence at the front or back of a caption.

    ``position="random"`` picks one end with a generator seeded by ``seed``.
    """
    if not distractor.strip():
        raise ValidationError("distractor must be non-empty")
    if position == "random":
        position = "front" if np.random.default_rng(seed).integers(2) == 0 else "back"
    if position == "front":
        sentences = (distractor,) + tuple(caption.sentences)
    elif position == "back":
        sentences = tuple(caption.sentences) + (distractor,)
    else:
        raise ValidationError(f"position must be front, back or random, got {position!r}")
    return replace(caption, sentences=sentences)


def build_report(sequences: list[ScoreSequence], meta: dict | None = None) -> HiMoReport:
    """Assemble per-sample scores and every HiMo number their length supports."""
    report = HiMoReport(per_sample=list(sequences), meta=dict(meta or {}))
    if not sequences:
        report.meta.setdefault("n_samples", 0)
        return report
    m = _score_matrix(sequences)
    k = m.shape[1]
    report.meta["n_samples"] = m.shape[0]
    report.meta["k"] = k
    if k in (2, 3):
        report.himo_shallow[k] = himo_shallow(sequences, k)
        report.per_sample_pearson = [None] * m.shape[0]
    elif k > 3:
        r, bad = himo_pearson_batch(sequences)
        report.per_sample_pearson = [None if b else float(x) for x, b in zip(r, bad)]
        report.himo_k_mean, report.n_degenerate = himo_k_mean(sequences)
    return report
