"""Experiment stages: decompose, extract, train, fuse-search, eval, report.

Every stage reads and writes plain files under the experiment directory,
so running the stages one by one gives byte-identical outputs to
``run_experiment``.  Layout (``<m>`` is the method name)::

    config.json
    decomp/<record>.diffuse.fmap     aligned diffuse reconstruction
    decomp/<record>.q21.fmap         aligned 21-bit normal codes
    features/<m>.<kind>.tsv          per-record descriptors
    models/<m>.cam<c>.<kind>.model
    scores/<m>.<split>.cam<c>.<kind>.csv, <m>.test.cam<c>.fused.csv, <m>.test.fused.csv
    weights/<m>.txt
    det/<m>.<camera>.csv
    summary/<m>.csv
    report/<m>.det.svg, report/<m>.txt
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, features, learning
from .core import DatasetManifest, FloatMap, Record, ScoreSet, concat_scores, load_image, load_manifest, \
    read_fmap, read_landmarks, read_scores, write_fmap
from .errors import FormatError, NumericError, StageError, ValidationError
from .evaluation import det_curve, pair_protocol, read_summary, summarize, summary_csv
from .geometry import align, align_transform, warp, warp_normals
from .shading import decompose, diffuse_reconstruct, load_template, template_fit

log = logging.getLogger(__name__)

METHODS = ("proposed", "lbp", "signed-distance")
KINDS = {
    "proposed": ("reconstruction", "normal"),
    "lbp": ("lbp",),
    "signed-distance": ("signed-distance",),
}
DECOMPOSERS = {"oracle": "oracle_files", "synthetic": "synthetic_ground_truth", "template": "template_fit"}
CAMERAS = (1, 2, 3, 4)
STAGES = ("decompose", "extract", "train", "fuse-search", "eval", "report")
METHOD_LABELS = {
    "proposed": "proposed",
    "lbp": "LBP (linear-SVM variant)",
    "signed-distance": "signed distance (linear-SVM variant)",
}
# train-split scores for the weight search come from this many reference-grouped folds
CV_FOLDS = 3
TAGS = {"normal": "q21-grid32", "lbp": "lbp-u2-p8r1-4x4", "signed-distance": "landmark-sd-136"}


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    out_dir: str
    method: str = "proposed"
    decomposer: str = "synthetic"
    extractor: str = "builtin"
    C: float = 1.0
    tune_c: bool = False
    weights: object = "search"   # "search", "paper" or 6 numbers (2 feature + 4 camera)
    seed: int = 42

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.decomposer not in DECOMPOSERS:
            raise ValidationError(f"unknown decomposer {self.decomposer!r}; choose from {', '.join(DECOMPOSERS)}")
        if self.extractor != "builtin" and not self.extractor.startswith("external:"):
            raise ValidationError(f"extractor must be 'builtin' or 'external:<dir>', got {self.extractor!r}")
        if not self.C > 0:
            raise ValidationError("C must be positive")
        w = self.weights
        if isinstance(w, str):
            if w not in ("search", "paper"):
                w = parse_weights(w)
        else:
            w = tuple(float(v) for v in w)
        if not isinstance(w, str):
            if len(w) != 6:
                raise ValidationError("explicit weights need 2 feature + 4 camera values")
            learning.FusionWeights(learning.renormalize(w[:2]), learning.renormalize(w[2:]))
        object.__setattr__(self, "weights", w)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        if isinstance(d["weights"], tuple):
            d["weights"] = list(d["weights"])
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None


def parse_weights(text: str):
    if text in ("search", "paper"):
        return text
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ValidationError(f"weights must be 'search', 'paper' or numbers, got {text!r}") from None


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        raise StageError(stage, path)
    return path


def _manifest(cfg) -> DatasetManifest:
    return load_manifest(cfg.manifest)


# ---------------------------------------------------------------- decompose


def _decomp_paths(out: Path, rid: str):
    return out / "decomp" / f"{rid}.diffuse.fmap", out / "decomp" / f"{rid}.q21.fmap"


def decompose_record(rec: Record, m: DatasetManifest, mode: str, template=None):
    """Aligned diffuse reconstruction and aligned quantised normals for one record."""
    img = load_image(m.resolve(rec.image_path))
    lm = read_landmarks(m.resolve(rec.landmarks_path))
    if mode == "template_fit":
        aligned, _, _ = align(img, lm)
        d = template_fit(aligned, template)
        return diffuse_reconstruct(d), features.quantize_normals(d.normals)
    d = decompose(img, rec, mode, m.root)
    t = align_transform(lm)
    diffuse = warp(diffuse_reconstruct(d), t)
    normals = warp_normals(d.normals, t)
    return diffuse, features.quantize_normals(normals)


def stage_decompose(cfg: ExperimentConfig):
    if cfg.method != "proposed":
        log.info("decompose: method %s uses no decomposition", cfg.method)
        return
    m = _manifest(cfg)
    mode = DECOMPOSERS[cfg.decomposer]
    template = load_template() if mode == "template_fit" else None
    (cfg.out / "decomp").mkdir(parents=True, exist_ok=True)
    for rec in m:
        diffuse, q = decompose_record(rec, m, mode, template)
        dp, qp = _decomp_paths(cfg.out, rec.record_id)
        write_fmap(diffuse, dp)
        write_fmap(features.pack_codes(q), qp)


# ---------------------------------------------------------------- extract


def write_table(path, ids, rows, tag: str):
    """Per-record descriptor table: a ``# tag`` line, then id and values, tab-separated."""
    lines = [f"# {tag}\n"]
    for rid, row in zip(ids, rows):
        lines.append(rid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text("".join(lines))


def read_table(path):
    """Returns (tag, {record_id: row index}, matrix)."""
    path = Path(path)
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise FormatError(f"{path}: missing tag line")
    ids, rows = [], []
    for line in text[1:]:
        rid, *vals = line.split("\t")
        ids.append(rid)
        try:
            rows.append([float(v) for v in vals])
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if len({len(r) for r in rows}) > 1:
        raise FormatError(f"{path}: ragged rows")
    return text[0][2:], {r: i for i, r in enumerate(ids)}, np.array(rows, dtype=np.float64)


def _table_path(out: Path, method: str, kind: str) -> Path:
    return out / "features" / f"{method}.{kind}.tsv"


def _embedding(cfg, rec: Record, m: DatasetManifest) -> features.Embedding:
    if cfg.extractor == "builtin":
        dp, _ = _decomp_paths(cfg.out, rec.record_id)
        return features.embed(read_fmap(_require(dp, "decompose")), "builtin")
    if rec.embedding_path is not None:
        path = m.resolve(rec.embedding_path)
    else:
        path = Path(cfg.extractor[len("external:"):]) / f"{rec.record_id}.txt"
    return features.embed(FloatMap(np.zeros((1, 1))), f"external:{path}")


def stage_extract(cfg: ExperimentConfig):
    m = _manifest(cfg)
    (cfg.out / "features").mkdir(parents=True, exist_ok=True)
    ids = [r.record_id for r in m]
    if cfg.method == "proposed":
        embs = [_embedding(cfg, r, m) for r in m]
        tags = {e.extractor_tag for e in embs}
        if len(tags) != 1 or len({e.dim for e in embs}) != 1:
            raise ValidationError("all records need embeddings from one extractor with one dimension")
        write_table(_table_path(cfg.out, "proposed", "reconstruction"), ids, [e.values for e in embs], tags.pop())
        for r in m:
            _require(_decomp_paths(cfg.out, r.record_id)[1], "decompose")
    elif cfg.method == "lbp":
        rows = []
        for r in m:
            img, _, _ = align(load_image(m.resolve(r.image_path)), read_landmarks(m.resolve(r.landmarks_path)))
            rows.append(baselines.lbp_feature(img))
        write_table(_table_path(cfg.out, "lbp", "lbp"), ids, rows, TAGS["lbp"])
    else:
        rows = [baselines.aligned_landmarks(read_landmarks(m.resolve(r.landmarks_path))).ravel() for r in m]
        write_table(_table_path(cfg.out, "signed-distance", "signed-distance"), ids, rows, TAGS["signed-distance"])


class FeatureSource:
    """Builds pair-feature matrices for one method from extracted artifacts."""

    def __init__(self, cfg: ExperimentConfig, m: DatasetManifest):
        self.cfg, self.m = cfg, m
        self.tables = {}
        self.codes = None

    def _table(self, kind):
        if kind not in self.tables:
            self.tables[kind] = read_table(_require(_table_path(self.cfg.out, self.cfg.method, kind), "extract"))
        return self.tables[kind]

    def _codes(self):
        if self.codes is None:
            maps = [features.unpack_codes(read_fmap(_require(_decomp_paths(self.cfg.out, r.record_id)[1], "decompose")))
                    for r in self.m]
            codes, masks = features.stack_codes(maps)
            self.codes = (codes, masks, {r.record_id: i for i, r in enumerate(self.m)})
        return self.codes

    def tag(self, kind) -> str:
        return TAGS["normal"] if kind == "normal" else self._table(kind)[0]

    def pairs(self, kind, pairs) -> np.ndarray:
        if kind == "normal":
            codes, masks, index = self._codes()
            ri = [index[r.record_id] for r, _, _ in pairs]
            pi = [index[p.record_id] for _, p, _ in pairs]
            return features.grid_features_indexed(codes, masks, ri, pi)
        _, index, mat = self._table(kind)
        try:
            a = mat[[index[r.record_id] for r, _, _ in pairs]]
            b = mat[[index[p.record_id] for _, p, _ in pairs]]
        except KeyError as exc:
            raise StageError("extract", _table_path(self.cfg.out, self.cfg.method, kind)) from exc
        return a - b if kind == "signed-distance" else np.abs(a - b)


# ---------------------------------------------------------------- train / scores


def _model_path(out, method, c, kind):
    return out / "models" / f"{method}.cam{c}.{kind}.model"


def _score_path(out, method, split, c, kind):
    return out / "scores" / f"{method}.{split}.cam{c}.{kind}.csv"


def _cameras(m: DatasetManifest, split: str):
    return [c for c in CAMERAS if m.select(split=split, role="gate", camera_id=c)]


def _scoreset(pairs, c, kind, scores) -> ScoreSet:
    return ScoreSet(
        np.array([p.record_id for _, p, _ in pairs], dtype=object),
        np.array([r.record_id for r, _, _ in pairs], dtype=object),
        np.full(len(pairs), str(c), dtype=object),
        np.array([lab for _, _, lab in pairs], dtype=object),
        np.full(len(pairs), kind, dtype=object),
        scores,
    )


def _labels(pairs):
    return np.array([1.0 if lab == "attack" else -1.0 for _, _, lab in pairs])


def stage_train(cfg: ExperimentConfig):
    m = _manifest(cfg)
    src = FeatureSource(cfg, m)
    (cfg.out / "models").mkdir(parents=True, exist_ok=True)
    (cfg.out / "scores").mkdir(parents=True, exist_ok=True)
    cams = _cameras(m, "train")
    if not cams:
        raise ValidationError("train split has no gate images")
    for c in cams:
        pairs = pair_protocol(m, "train", c)
        y = _labels(pairs)
        folds = learning.cv_folds([r.record_id for r, _, _ in pairs], y, CV_FOLDS, cfg.seed)
        for kind in KINDS[cfg.method]:
            X = src.pairs(kind, pairs)
            tag = src.tag(kind)
            if cfg.tune_c:
                model = learning.tune_c(X, y, seed=cfg.seed, tag=tag)
            else:
                model = learning.svm_train(X, y, C=cfg.C, seed=cfg.seed, tag=tag)
            model.save(_model_path(cfg.out, cfg.method, c, kind))
            _scoreset(pairs, c, kind, learning.svm_score(model, X)).write_csv(
                _score_path(cfg.out, cfg.method, "train", c, kind))
            if cfg.weights == "search":
                cv = learning.cross_val_scores(X, y, folds, C=model.C, seed=cfg.seed, tag=tag)
                _scoreset(pairs, c, kind, cv).write_csv(_score_path(cfg.out, cfg.method, "cv", c, kind))


def _normalized(cfg, split_scores: ScoreSet, c, kind) -> np.ndarray:
    train = read_scores(_require(_score_path(cfg.out, cfg.method, "train", c, kind), "train"))
    try:
        return learning.normalize_scores(train.score, split_scores.score)
    except NumericError as exc:
        raise NumericError(f"camera {c} {kind}: {exc}") from None


def camera_fused(cfg, split: str, c: int, feature_weights) -> ScoreSet:
    """Per-camera score: feature-level weighted sum of normalised branch scores."""
    sets = [read_scores(_require(_score_path(cfg.out, cfg.method, split, c, k), "eval" if split == "test" else "train"))
            for k in KINDS[cfg.method]]
    branches = [_normalized(cfg, s, c, k) for s, k in zip(sets, KINDS[cfg.method])]
    w = feature_weights[:len(branches)] if len(branches) > 1 else (1.0,)
    return sets[0].with_scores(learning.fuse(np.vstack(branches), w), feature_tag=np.full(len(sets[0]), "fused", dtype=object))


def cross_camera_align(per_cam: dict, m: DatasetManifest):
    """Index-aligned score rows across cameras.

    Scores are grouped by (reference, probe subject); within a group the
    k-th gate image of every camera is matched, truncating to the smallest
    per-camera count.  Group order follows the first camera's score order.
    Returns (reference ids, pseudo probe ids, labels, score matrix with one
    row per camera).
    """
    subject = {r.record_id: r.subject_id for r in m}
    cams = list(per_cam)
    groups = {}
    for c in cams:
        s = per_cam[c]
        for ref, probe, lab, val in zip(s.reference_id, s.probe_id, s.label, s.score):
            g = groups.setdefault((ref, subject[probe]), {"label": lab, "cams": {}})
            g["cams"].setdefault(c, []).append(val)
    refs, probes, labels, rows = [], [], [], []
    for (ref, subj), g in groups.items():
        n = min(len(g["cams"].get(c, ())) for c in cams)
        for k in range(n):
            refs.append(ref)
            probes.append(f"{subj}#{k}")
            labels.append(g["label"])
            rows.append([g["cams"][c][k] for c in cams])
    return refs, probes, labels, np.array(rows, dtype=np.float64).reshape(len(rows), len(cams)).T


def cross_camera_fused(per_cam: dict, m: DatasetManifest, camera_weights) -> ScoreSet:
    refs, probes, labels, S = cross_camera_align(per_cam, m)
    w = [camera_weights[c - 1] for c in per_cam]
    if abs(sum(w) - 1.0) > 1e-9:
        w = learning.renormalize(w)
    n = len(refs)
    return ScoreSet(np.array(probes, dtype=object), np.array(refs, dtype=object),
                    np.full(n, "fused", dtype=object), np.array(labels, dtype=object),
                    np.full(n, "fused", dtype=object), learning.fuse(S, w) if n else np.zeros(0))


# ---------------------------------------------------------------- fusion weights


def _weights_path(out, method):
    return out / "weights" / f"{method}.txt"


def stage_fuse_search(cfg: ExperimentConfig):
    m = _manifest(cfg)
    kinds = KINDS[cfg.method]
    cams = _cameras(m, "train")
    for c in cams:
        for k in kinds:
            _require(_model_path(cfg.out, cfg.method, c, k), "train")
    if cfg.weights == "paper":
        fw = learning.paper_weights()
        if len(kinds) == 1:
            fw = learning.FusionWeights((1.0, 0.0), fw.camera_weights)
    elif isinstance(cfg.weights, tuple):
        fw = learning.FusionWeights(learning.renormalize(cfg.weights[:2]), learning.renormalize(cfg.weights[2:]))
    else:
        if len(kinds) > 1:
            branches = []
            for k in kinds:
                sets = [read_scores(_require(_score_path(cfg.out, cfg.method, "cv", c, k), "train")) for c in cams]
                pooled = np.concatenate([_normalized(cfg, s, c, k) for s, c in zip(sets, cams)])
                branches.append((pooled, concat_scores(sets).is_attack))
            feat_w = learning.greedy_weight_search(branches)
        else:
            feat_w = (1.0, 0.0)
        per_cam = {c: camera_fused(cfg, "cv", c, feat_w) for c in cams}
        _, _, labels, S = cross_camera_align(per_cam, m)
        lab = np.array(labels) == "attack"
        found = learning.greedy_weight_search([(S[i], lab) for i in range(len(cams))])
        cam_w = [0.0] * len(CAMERAS)
        for c, v in zip(cams, found):
            cam_w[c - 1] = v
        fw = learning.FusionWeights(feat_w, tuple(cam_w))
    (cfg.out / "weights").mkdir(parents=True, exist_ok=True)
    fw.save(_weights_path(cfg.out, cfg.method))
    return fw


# ---------------------------------------------------------------- eval


def _det_path(out, method, label):
    return out / "det" / f"{method}.{label}.csv"


def _summary_path(out, method):
    return out / "summary" / f"{method}.csv"


def stage_eval(cfg: ExperimentConfig):
    m = _manifest(cfg)
    kinds = KINDS[cfg.method]
    train_cams = _cameras(m, "train")
    for c in train_cams or CAMERAS:
        for k in kinds:
            _require(_model_path(cfg.out, cfg.method, c, k), "train")
    fw = learning.FusionWeights.load(_require(_weights_path(cfg.out, cfg.method), "fuse-search"))
    cams = [c for c in _cameras(m, "test") if c in train_cams]
    if not cams:
        raise ValidationError("test split has no gate images from a trained camera")
    src = FeatureSource(cfg, m)
    for d in ("scores", "det", "summary"):
        (cfg.out / d).mkdir(parents=True, exist_ok=True)
    rows = []
    per_cam = {}
    for c in cams:
        pairs = pair_protocol(m, "test", c)
        for k in kinds:
            model = learning.LinearSVMModel.load(_model_path(cfg.out, cfg.method, c, k))
            X = src.pairs(k, pairs)
            _scoreset(pairs, c, k, learning.svm_score(model, X)).write_csv(
                _score_path(cfg.out, cfg.method, "test", c, k))
        fused = camera_fused(cfg, "test", c, fw.feature_weights)
        fused.write_csv(_score_path(cfg.out, cfg.method, "test", c, "fused"))
        det_curve(fused).write_csv(_det_path(cfg.out, cfg.method, f"camera{c}"))
        rows.append((cfg.method, f"Camera{c}", summarize(fused)))
        per_cam[c] = fused
    total = cross_camera_fused(per_cam, m, fw.camera_weights)
    total.write_csv(cfg.out / "scores" / f"{cfg.method}.test.fused.csv")
    det_curve(total).write_csv(_det_path(cfg.out, cfg.method, "fused"))
    rows.append((cfg.method, "Fused", summarize(total)))
    text = summary_csv(rows)
    _summary_path(cfg.out, cfg.method).write_text(text)
    return text


# ---------------------------------------------------------------- report


def read_det_csv(path):
    path = Path(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 0], rows[:, 1], rows[:, 2]


def render_det_svg(curves: dict, path, title: str):
    """DET plot (probit axes) of APCER against BPCER, one line per camera."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from scipy.stats import norm

    matplotlib.rcParams["svg.hashsalt"] = "dmad"
    lo, hi = 1e-3, 0.5
    ticks = [0.001, 0.01, 0.05, 0.1, 0.2, 0.4]
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, (apc, bpc) in curves.items():
        ax.plot(norm.ppf(np.clip(apc, lo, 1 - lo)), norm.ppf(np.clip(bpc, lo, 1 - lo)), label=label,
                lw=2.0 if label == "Fused" else 1.0)
    ax.set_xticks(norm.ppf(ticks), [f"{100 * t:g}" for t in ticks])
    ax.set_yticks(norm.ppf(ticks), [f"{100 * t:g}" for t in ticks])
    ax.set_xlim(norm.ppf(lo), norm.ppf(hi))
    ax.set_ylim(norm.ppf(lo), norm.ppf(hi))
    ax.set_xlabel("APCER (%)")
    ax.set_ylabel("BPCER (%)")
    ax.set_title(title)
    ax.grid(True, lw=0.3)
    ax.legend(loc="upper right")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _cell(values) -> str:
    v = 100 * np.asarray(values)
    if len(v) == 1:
        return f"{v[0]:.2f}"
    return f"{v.mean():.2f}+-{v.std(ddof=1):.2f}"


def report(summary_paths, out_dir) -> list[Path]:
    """One DET SVG and one text table per method found in the summary CSVs.

    DET curves are read from ``../det/`` next to the first summary file that
    names the method.  When several summaries (e.g. one per seed) cover the
    same method, the table shows mean+-std over them, else point values.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_method = {}
    for i, sp in enumerate(summary_paths):
        sp = Path(sp)
        if not sp.is_file():
            raise StageError("eval", sp)
        for r in read_summary(sp):
            runs = by_method.setdefault(r["method"], {})
            runs.setdefault((i, sp), []).append(r)
    written = []
    for method, runs in by_method.items():
        (_, sp), mrows = next(iter(runs.items()))
        curves = {}
        for r in mrows:
            label = "Fused" if r["camera"] == "Fused" else r["camera"]
            det = sp.parent.parent / "det" / f"{method}.{label.lower()}.csv"
            _, apc, bpc = read_det_csv(_require(det, "eval"))
            curves[label] = (apc, bpc)
        name = METHOD_LABELS.get(method, method)
        svg = out_dir / f"{method}.det.svg"
        render_det_svg(curves, svg, name)
        head = f"{name}" + (f" ({len(runs)} runs, mean+-std)" if len(runs) > 1 else "")
        lines = [head + "\n", f"{'camera':<10}{'D-EER %':>14}{'BPCER20 %':>14}{'BPCER10 %':>14}\n"]
        for cam in dict.fromkeys(r["camera"] for rows in runs.values() for r in rows):
            cols = [[r[k] for rows in runs.values() for r in rows if r["camera"] == cam]
                    for k in ("eer", "bpcer20", "bpcer10")]
            lines.append(f"{cam:<10}" + "".join(f"{_cell(v):>14}" for v in cols) + "\n")
        txt = out_dir / f"{method}.txt"
        txt.write_text("".join(lines))
        written += [svg, txt]
    return written


def stage_report(cfg: ExperimentConfig):
    return report([_summary_path(cfg.out, cfg.method)], cfg.out / "report")


# ---------------------------------------------------------------- driver

STAGE_FUNCS = {
    "decompose": stage_decompose,
    "extract": stage_extract,
    "train": stage_train,
    "fuse-search": stage_fuse_search,
    "eval": stage_eval,
    "report": stage_report,
}


def run_stage(cfg: ExperimentConfig, stage: str):
    """Run one stage; failures carry the stage name as ``failed_stage``."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.json").write_text(cfg.to_json())
    try:
        return STAGE_FUNCS[stage](cfg)
    except Exception as exc:
        if not hasattr(exc, "failed_stage"):
            exc.failed_stage = stage
        raise


def run_experiment(cfg: ExperimentConfig) -> str:
    """All stages in order; returns the summary CSV text."""
    for stage in STAGES:
        run_stage(cfg, stage)
    return _summary_path(cfg.out, cfg.method).read_text()
