"""Caption files, score tables, synthetic dataset bundles and report files.

Caption schema (JSON)::

    [{"id": "sample-0", "segments": ["First sentence.", "Second one."]}, ...]

Reports are written with sorted keys and floats rounded to six significant
digits so identical reports produce identical bytes.
"""

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .metrics import HiMoReport, ScoreSequence, SegmentedCaption
from .numeric import load_matrix, save_matrix

CSV_COLUMNS = ("sample_id", "k", "score", "pearson")


@dataclass(frozen=True)
class CaptionEntry:
    id: str
    segments: tuple[str, ...]

    def as_caption(self) -> SegmentedCaption:
        return SegmentedCaption(self.id, self.segments, precomputed=True)


@dataclass(frozen=True)
class CaptionFile:
    entries: tuple[CaptionEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def captions(self) -> list[SegmentedCaption]:
        return [e.as_caption() for e in self.entries]


def parse_captions(text: str, source: str = "<string>") -> CaptionFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{source}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, list):
        raise ValidationError(f"{source}: top level must be a list of entries")
    seen = set()
    entries = []
    for pos, item in enumerate(data):
        if not isinstance(item, dict) or "id" not in item or "segments" not in item:
            raise ValidationError(f"{source}: entry {pos} needs 'id' and 'segments'")
        cid = item["id"]
        if not isinstance(cid, str) or not cid:
            raise ValidationError(f"{source}: entry {pos} has an invalid id")
        if cid in seen:
            raise ValidationError(f"{source}: duplicate id {cid!r}")
        seen.add(cid)
        segs = item["segments"]
        if not isinstance(segs, list) or not segs:
            raise ValidationError(f"{source}: entry {cid!r} has no segments")
        for seg in segs:
            if not isinstance(seg, str) or not seg.strip():
                raise ValidationError(f"{source}: entry {cid!r} has an empty segment")
        entries.append(CaptionEntry(cid, tuple(segs)))
    return CaptionFile(tuple(entries))


def load_captions(path) -> CaptionFile:
    path = Path(path)
    return parse_captions(path.read_text(encoding="utf-8"), str(path))


def dump_captions(captions: CaptionFile) -> str:
    data = [{"id": e.id, "segments": list(e.segments)} for e in captions.entries]
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def save_captions(captions: CaptionFile, path) -> None:
    Path(path).write_text(dump_captions(captions), encoding="utf-8")


# --- score tables ----------------------------------------------------------

def load_scores_csv(path) -> dict[str, list[float]]:
    """Read ``sample_id,k,score[,...]`` rows into per-sample score lists.

    Rows may arrive in any order; each sample's k values must be 1..K.
    """
    by_id: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"sample_id", "k", "score"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):
            try:
                k = int(row["k"])
                score = float(row["score"])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {line_no}: {exc}") from exc
            if not np.isfinite(score):
                raise ValidationError(f"{path}: line {line_no}: non-finite score")
            slot = by_id.setdefault(row["sample_id"], {})
            if k in slot:
                raise ValidationError(f"{path}: duplicate k={k} for sample {row['sample_id']!r}")
            slot[k] = score
    out = {}
    for sid, slot in by_id.items():
        ks = sorted(slot)
        if ks != list(range(1, len(ks) + 1)):
            raise ValidationError(f"{path}: sample {sid!r} has k values {ks}, expected 1..{len(ks)}")
        out[sid] = [slot[k] for k in ks]
    return out


def write_scores_csv(path, sequences: list[ScoreSequence]) -> None:
    report = HiMoReport(per_sample=list(sequences), per_sample_pearson=[None] * len(sequences))
    Path(path).write_text(report_to_csv(report), encoding="utf-8")


# --- reports ---------------------------------------------------------------

def _fmt(x):
    """Round to six significant digits; recurse through containers."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.6g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_fmt(v) for v in x]
    raise TypeError(f"cannot serialize {type(x).__name__}")


def report_to_dict(report: HiMoReport) -> dict:
    return {
        "himo_k_mean": report.himo_k_mean,
        "himo_shallow": {str(k): v for k, v in sorted(report.himo_shallow.items())},
        "meta": report.meta,
        "n_degenerate": report.n_degenerate,
        "n_samples": len(report.per_sample),
        "per_sample": [
            {"sample_id": s.sample_id, "scores": list(s.scores), "pearson": p}
            for s, p in zip(report.per_sample, _padded(report))
        ],
        "recall_at": report.recall_at,
        "ssi": report.ssi,
    }


def _padded(report: HiMoReport):
    p = list(report.per_sample_pearson)
    return p + [None] * (len(report.per_sample) - len(p))


def report_from_dict(data: dict) -> HiMoReport:
    return HiMoReport(
        per_sample=[ScoreSequence(tuple(s["scores"]), s["sample_id"]) for s in data["per_sample"]],
        per_sample_pearson=[s["pearson"] for s in data["per_sample"]],
        himo_shallow={int(k): v for k, v in data["himo_shallow"].items()},
        himo_k_mean=data["himo_k_mean"],
        n_degenerate=data["n_degenerate"],
        recall_at=dict(data["recall_at"]),
        ssi=data["ssi"],
        meta=dict(data["meta"]),
    )


def dumps_stable(obj) -> str:
    return json.dumps(_fmt(obj), indent=2, sort_keys=True) + "\n"


def report_to_json(report: HiMoReport) -> str:
    return dumps_stable(report_to_dict(report))


def report_to_csv(report: HiMoReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for seq, pearson in zip(report.per_sample, _padded(report)):
        p = "" if pearson is None else repr(_fmt(pearson))
        for k, score in enumerate(seq.scores, start=1):
            writer.writerow([seq.sample_id, k, repr(_fmt(score)), p])
    return buf.getvalue()


def write_report(report: HiMoReport, path, fmt: str = "json") -> None:
    """Write ``report`` as JSON or CSV (``sample_id,k,score,pearson``)."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def read_report(path) -> HiMoReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_stable(obj), encoding="utf-8")


# --- synthetic dataset bundles ---------------------------------------------

@dataclass
class PairedDataset:
    """Paired image/text features plus the text's per-layer decomposition."""

    image_features: np.ndarray  # (N, d_in)
    layer_features: np.ndarray  # (K, N, d_in); text = sum over layers

    @property
    def text_features(self) -> np.ndarray:
        return self.layer_features.sum(axis=0)

    @property
    def num_layers(self) -> int:
        return self.layer_features.shape[0]

    def __len__(self) -> int:
        return self.image_features.shape[0]

    def subset(self, idx) -> "PairedDataset":
        return PairedDataset(self.image_features[idx], self.layer_features[:, idx])

    def subtexts(self) -> np.ndarray:
        return np.cumsum(self.layer_features, axis=0)


def save_dataset(directory, splits: dict[str, PairedDataset], meta: dict) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"meta": meta, "splits": {}}
    for name, ds in splits.items():
        files = {"image": f"{name}.image.bin", "layers": []}
        save_matrix(directory / files["image"], ds.image_features)
        for k in range(ds.num_layers):
            fname = f"{name}.layer{k + 1}.bin"
            save_matrix(directory / fname, ds.layer_features[k])
            files["layers"].append(fname)
        manifest["splits"][name] = files
    write_json(directory / "manifest.json", manifest)


def load_dataset(directory) -> tuple[dict[str, PairedDataset], dict]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no dataset manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    splits = {}
    for name, files in manifest["splits"].items():
        image = load_matrix(directory / files["image"])
        layers = np.stack([load_matrix(directory / f) for f in files["layers"]])
        splits[name] = PairedDataset(image, layers)
    return splits, manifest["meta"]
