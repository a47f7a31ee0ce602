"""Scoring captions with featurized text, for evaluation without images.

No real images exist in this package, so caption-level pipelines compare each
subtext against a reference embedding built from the clean full caption (run
through the image encoder when one is supplied). With no encoders the raw
hashed feature vectors are compared directly.
"""

import numpy as np

from . import encoders, metrics
from .encoders import EncoderParams
from .errors import ValidationError
from .metrics import ScoreSequence, SegmentedCaption


def _embed(params: EncoderParams | None, x: np.ndarray) -> np.ndarray:
    if params is None:
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms < encoders.NORM_EPS):
            raise ValidationError("featurized text has zero norm (no tokens?)")
        return x / norms[:, None]
    return encoders.encode_batch(params, x)


def caption_subtext_scores(caption: SegmentedCaption, k: int, d_in: int, *, seed: int = 0,
                           image: EncoderParams | None = None,
                           text: EncoderParams | None = None,
                           distractor: str | None = None, position: str = "back",
                           noise_seed: int = 0) -> ScoreSequence:
    """Cosine between the caption's reference embedding and each subtext t_1..t_K.

    With ``distractor`` set, every subtext gets the distractor sentence
    inserted (at ``position``) before scoring; the reference stays clean.
    """
    ref = encoders.featurize_text(" ".join(caption.sentences), d_in, seed).values[None, :]
    subtexts = [" ".join(caption.sentences)] if k == 1 else metrics.segment(caption, k)
    if distractor is not None:
        noisy = []
        for j, sub in enumerate(subtexts):
            c = SegmentedCaption(f"{caption.id}/{j}", (sub,))
            c = metrics.inject_noise(c, distractor, position, noise_seed + j)
            noisy.append(" ".join(c.sentences))
        subtexts = noisy
    feats = encoders.featurize_batch(subtexts, d_in, seed)
    v = _embed(image, ref)[0]
    u = _embed(text, feats)
    return ScoreSequence(tuple(float(x) for x in u @ v), caption.id)


def ssi_for_captions(captions: list[SegmentedCaption], distractors: list[str], k: int,
                     d_in: int, *, seed: int = 0, position: str = "random",
                     image: EncoderParams | None = None,
                     text: EncoderParams | None = None):
    """SSI of featurized captions under distractor injection.

    Distractors are assigned round-robin. Returns ``(ssi, ori, noised)``.
    """
    if not distractors:
        raise ValidationError("at least one distractor sentence is required")
    ori, noised = [], []
    for i, cap in enumerate(captions):
        kk = min(k, len(cap.sentences))
        ori.append(caption_subtext_scores(cap, kk, d_in, seed=seed, image=image, text=text))
        noised.append(caption_subtext_scores(
            cap, kk, d_in, seed=seed, image=image, text=text,
            distractor=distractors[i % len(distractors)], position=position,
            noise_seed=seed * 1_000_003 + i))
    return metrics.ssi(ori, noised), ori, noised
