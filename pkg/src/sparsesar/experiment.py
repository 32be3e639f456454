"""Config-driven experiment pipeline: scenes -> pattern -> echoes ->
reconstruction -> metrics, plus training and report summaries.

Echoes are generated with the imaging operator's forward model at the
chosen pulse times.  Row ``i`` of a run draws its noise from
``SeedSequence([seed, i])`` so rows are independent of execution order.
Reports contain no timing data (timings go to ``timing.csv``) so reruns
with the same seed produce byte-identical reports.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .denoiser import DenoiserModel, init_denoiser, zero_denoiser
from .io import export_image, format_number, ingest_image, load_weights, read_csv, save_weights, write_csv
from .metrics import PSNR_CAP_DB, capped_db, complex_psnr, complex_ssim
from .operators import CsaFilters, CsaOperator, NuftPlan, make_csa_filters
from .recon import ModlConfig, ista_baseline, modl_reconstruct
from .sampling import (
    SamplingPattern,
    interval_histogram,
    jittered_uniform_pattern,
    load_pattern_csv,
    poisson_disk_pattern,
    save_pattern_csv,
    staggered_for_budget,
    uniform_pattern,
)
from .sar import SarParams, fast_time_grid
from .scenes import scene_set
from .training import LearningRates, SceneEchoSource, TrainState, train_joint

log = logging.getLogger(__name__)

REPORT_HEADER = [
    "scene_id",
    "pattern",
    "budget",
    "pulses",
    "ssim",
    "undersampled_psnr_db",
    "reconstruction_psnr_db",
    "psnr_gain_db",
    "status",
]

# training scenes are drawn from a stream disjoint from the evaluation scenes
TRAIN_SEED_OFFSET = 1_000_003


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class System:
    params: SarParams
    filters: CsaFilters
    azimuth_cells: int
    range_cells: int

    @property
    def aperture(self) -> tuple[float, float]:
        return (0.0, self.azimuth_cells / self.params.prf)

    def operator(self, pattern: SamplingPattern) -> CsaOperator:
        return CsaOperator(self.filters, NuftPlan(pattern.positions, self.azimuth_cells, self.params.prf))


@dataclass
class ReportRow:
    scene_id: str
    pattern: str
    budget: float
    pulses: int
    ssim: float
    undersampled_psnr_db: float
    reconstruction_psnr_db: float
    psnr_gain_db: float
    status: str = "ok"

    def values(self) -> list:
        return [getattr(self, k) for k in REPORT_HEADER]


def build_system(cfg: ExperimentConfig) -> System:
    params = cfg.sar_params()
    na, nr = cfg.raster
    tau = fast_time_grid(params, nr)
    filters = make_csa_filters(params, NuftPlan.uniform(na, params.prf), tau)
    return System(params, filters, na, nr)


def pulse_count(budget: float, azimuth_cells: int) -> int:
    return max(2, int(round(budget * azimuth_cells)))


def make_pattern(system: System, kind: str, budget: float, min_spacing_pri: float, seed: int, path=None) -> SamplingPattern:
    """Sampling pattern of ``round(budget * Na)`` pulses over the full aperture.

    ``min_spacing_pri`` is the minimum pulse spacing in units of the nominal
    PRI (used by the Poisson-disk, jittered and learned patterns).
    """
    ap = system.aperture
    pri = 1.0 / system.params.prf
    spacing = min_spacing_pri * pri
    if kind == "learned":
        return load_pattern_csv(path, ap, spacing)
    m = pulse_count(budget, system.azimuth_cells)
    if kind == "uniform":
        return uniform_pattern(ap, m)
    if kind == "poisson":
        return poisson_disk_pattern(ap, m, spacing, seed)
    if kind == "staggered":
        return staggered_for_budget(ap, m)
    if kind == "jittered":
        return jittered_uniform_pattern(ap, m, 0.1, seed, spacing)
    raise ConfigError(f"unknown pattern kind {kind!r}")


def load_scenes(cfg: ExperimentConfig, seed: int | None = None, count: int | None = None) -> list[tuple[str, np.ndarray]]:
    """Complex ground-truth scenes with peak magnitude at most 1."""
    seed = cfg.seed if seed is None else seed
    shape = cfg.raster
    if cfg.get("scene", "source") == "synthetic":
        n = count or cfg.get("scene", "count")
        tier = cfg.get("scene", "tier")
        return [(f"{tier}-{i:03d}", s) for i, s in enumerate(scene_set(n, shape, seed, tier))]
    scenes = []
    for i, path in enumerate(cfg.image_paths()):
        amp = ingest_image(path, shape) / 255.0
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        scenes.append((path.stem, amp * np.exp(2j * np.pi * rng.random(shape))))
    return scenes


def load_model(cfg: ExperimentConfig) -> tuple[DenoiserModel | None, float]:
    """Trained denoiser and lambda from ``[recon] weights``, or ``None`` (identity denoiser)."""
    if cfg.get("recon", "weights"):
        return load_weights(cfg.path("recon", "weights"))
    return None, cfg.get("recon", "lam")


def _noisy_echo(op: CsaOperator, scene: np.ndarray, sigma: float, seed: int, row: int) -> np.ndarray:
    echo = op.echo(scene)
    if sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, row]))
        echo = echo + (sigma / math.sqrt(2.0)) * (rng.standard_normal(echo.shape) + 1j * rng.standard_normal(echo.shape))
    return echo


def reconstruct(cfg: ExperimentConfig, method: str, op: CsaOperator, echo, model, lam: float) -> np.ndarray:
    if method == "mf":
        return op.image(echo)
    if method == "ista":
        mf = op.image(echo)
        thresh = cfg.get("recon", "lambda_l1") * float(np.abs(mf).max())
        return ista_baseline(echo, op, thresh, iterations=cfg.get("recon", "ista_iterations"))
    if method == "modl":
        mc = ModlConfig(cfg.get("recon", "unroll_count"), cfg.get("recon", "cg_iterations"), lam)
        if model is None:
            model = _identity_model()
        return modl_reconstruct(echo, op, model, mc)
    raise ConfigError(f"unknown recon method {method!r}")


def _identity_model() -> DenoiserModel:
    return zero_denoiser(1, 2)


def _safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def evaluate_pattern(
    cfg: ExperimentConfig,
    system: System,
    scenes: list[tuple[str, np.ndarray]],
    pattern: SamplingPattern,
    label: str,
    budget: float,
    model,
    lam: float,
    out_dir: Path | None,
    row_offset: int = 0,
    timings: list | None = None,
) -> list[ReportRow]:
    """Reconstruct every scene at ``pattern``; failures become rows with an error status."""
    method = cfg.get("recon", "method")
    op = system.operator(pattern)
    rows = []
    for i, (scene_id, scene) in enumerate(scenes):
        start = time.perf_counter()
        try:
            echo = _noisy_echo(op, scene, cfg.get("scene", "noise_sigma"), cfg.seed, row_offset + i)
            mf = op.image(echo)
            recon = reconstruct(cfg, method, op, echo, model, lam)
            if not np.all(np.isfinite(recon)):
                raise PipelineError("reconstruction is not finite")
            # rounded to the report precision so the gain column is exact
            under = round(capped_db(complex_psnr(mf, scene)), 6)
            rec = round(capped_db(complex_psnr(recon, scene)), 6)
            row = ReportRow(
                scene_id, label, budget, pattern.budget, complex_ssim(recon, scene), under, rec, round(rec - under, 6)
            )
            if out_dir is not None:
                stem = _safe_name(f"{scene_id}_{label}_{budget:g}")
                export_image(scene, out_dir / f"{_safe_name(scene_id)}_truth.pgm")
                export_image(mf, out_dir / f"{stem}_mf.pgm")
                export_image(recon, out_dir / f"{stem}_{method}.pgm")
        except Exception as exc:  # recorded per row; the run continues
            log.warning("row %s failed: %s", scene_id, exc)
            nan = math.nan
            row = ReportRow(scene_id, label, budget, pattern.budget, nan, nan, nan, nan, f"error: {exc}")
        rows.append(row)
        if timings is not None:
            timings.append((scene_id, label, budget, time.perf_counter() - start))
    return rows


def _json_value(v):
    if isinstance(v, float):
        if math.isnan(v):
            return None
        return round(v, 6)
    return v


def write_report(out_dir: Path, rows: list[ReportRow], meta: dict) -> None:
    write_csv(out_dir / "report.csv", REPORT_HEADER, [r.values() for r in rows])
    doc = {"meta": meta, "rows": [{k: _json_value(v) for k, v in asdict(r).items()} for r in rows]}
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_pattern_artifacts(out_dir: Path, pattern: SamplingPattern, prefix: str = "") -> None:
    save_pattern_csv(pattern, out_dir / f"{prefix}pattern.csv")
    if pattern.budget >= 2:
        edges, counts = interval_histogram(pattern, bins=10)
        write_csv(
            out_dir / f"{prefix}interval_histogram.csv",
            ["bin_left_s", "bin_right_s", "count"],
            [(f"{a:.9e}", f"{b:.9e}", c) for a, b, c in zip(edges[:-1], edges[1:], counts)],
        )


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "seed": cfg.seed,
        "raster": list(cfg.raster),
        "recon": cfg.get("recon", "method"),
        "psnr_cap_db": PSNR_CAP_DB,
    }


def _pattern_for(cfg: ExperimentConfig, system: System, kind: str, budget: float) -> SamplingPattern:
    path = cfg.path("pattern", "path") if kind == "learned" else None
    return make_pattern(system, kind, budget, cfg.get("pattern", "min_spacing"), cfg.seed, path)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[ReportRow]:
    """One pattern / budget / reconstruction method over all configured scenes."""
    out = Path(out_dir or cfg.path("experiment", "out"))
    (out / "images").mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    kind, budget = cfg.get("pattern", "kind"), cfg.get("pattern", "budget")
    pattern = _pattern_for(cfg, system, kind, budget)
    model, lam = load_model(cfg)
    timings: list = []
    rows = evaluate_pattern(cfg, system, load_scenes(cfg), pattern, kind, budget, model, lam, out / "images", 0, timings)
    write_pattern_artifacts(out, pattern)
    write_report(out, rows, _meta(cfg, "reconstruct"))
    write_csv(out / "timing.csv", ["scene_id", "pattern", "budget", "wall_time_s"], timings)
    return rows


def run_evaluation(cfg: ExperimentConfig, out_dir=None) -> list[ReportRow]:
    """Grid over the configured pattern kinds and budget fractions."""
    out = Path(out_dir or cfg.path("experiment", "out"))
    (out / "images").mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    scenes = load_scenes(cfg)
    model, lam = load_model(cfg)
    rows: list[ReportRow] = []
    timings: list = []
    for kind in cfg.evaluation_patterns():
        budgets = [cfg.get("pattern", "budget")] if kind == "learned" else cfg.evaluation_budgets()
        for budget in budgets:
            pattern = _pattern_for(cfg, system, kind, budget)
            rows += evaluate_pattern(cfg, system, scenes, pattern, kind, budget, model, lam, out / "images", len(rows), timings)
            write_pattern_artifacts(out, pattern, prefix=_safe_name(f"{kind}_{budget:g}_"))
    write_report(out, rows, _meta(cfg, "evaluate"))
    write_csv(out / "timing.csv", ["scene_id", "pattern", "budget", "wall_time_s"], timings)
    return rows


def run_simulation(cfg: ExperimentConfig, out_dir=None) -> list[Path]:
    """Ground-truth scenes and their echoes at the configured pattern (``.npz`` per scene)."""
    out = Path(out_dir or cfg.path("experiment", "out"))
    (out / "echoes").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    pattern = _pattern_for(cfg, system, cfg.get("pattern", "kind"), cfg.get("pattern", "budget"))
    op = system.operator(pattern)
    written = []
    for i, (scene_id, scene) in enumerate(load_scenes(cfg)):
        echo = _noisy_echo(op, scene, cfg.get("scene", "noise_sigma"), cfg.seed, i)
        path = out / "echoes" / f"{_safe_name(scene_id)}.npz"
        np.savez(path, echo=echo, scene=scene, azimuth_times=pattern.positions)
        export_image(scene, out / "images" / f"{_safe_name(scene_id)}_truth.pgm")
        written.append(path)
    write_pattern_artifacts(out, pattern)
    return written


def run_training(cfg: ExperimentConfig, out_dir=None, callback=None) -> dict:
    """Joint training on synthetic scenes; writes weights, learned pattern and loss history."""
    out = Path(out_dir or cfg.path("experiment", "out"))
    out.mkdir(parents=True, exist_ok=True)
    system = build_system(cfg)
    t = cfg.values["train"]
    kind = cfg.get("pattern", "kind")
    pattern = _pattern_for(cfg, system, kind, cfg.get("pattern", "budget"))
    scenes = load_scenes(cfg, seed=cfg.seed + TRAIN_SEED_OFFSET, count=t["count"])
    dataset = [(SceneEchoSource(s, cfg.get("scene", "noise_sigma"), cfg.seed + i), s) for i, (_, s) in enumerate(scenes)]
    lam0 = cfg.get("recon", "lam")
    if lam0 <= 0:
        raise ConfigError(f"{cfg.where('recon', 'lam')}: training needs a positive initial lam")
    state = TrainState(pattern, init_denoiser(t["depth"], t["width"], cfg.seed), rho=math.log(lam0), seed=cfg.seed)
    rates = LearningRates(t["lr_weights"], t["lr_lambda"], t["lr_pattern"] / system.params.prf)
    mc = ModlConfig(cfg.get("recon", "unroll_count"), cfg.get("recon", "cg_iterations"), lam0)
    result = train_joint(
        dataset, state, system.filters, system.params.prf, t["epochs"], rates, mc,
        train_pattern=t["train_pattern"], through_echo=t["through_echo"], callback=callback,
    )
    save_weights(out / "model.ssdw", state.model, state.lam)
    write_pattern_artifacts(out, state.pattern, prefix="learned_")
    write_csv(out / "loss_history.csv", ["epoch", "sample_index", "loss"], [(e, i, f"{l:.12e}") for e, i, l in result.history])
    means = result.epoch_means()
    summary = {
        "epochs": t["epochs"],
        "initial_loss": float(means[0]) if len(means) else None,
        "final_loss": float(means[-1]) if len(means) else None,
        "lambda": state.lam,
        "pulses": state.pattern.budget,
        "seed": cfg.seed,
    }
    (out / "train.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def summarize_report(report_path) -> list[list[str]]:
    """Per (pattern, budget) means of the numeric report columns, in first-seen order."""
    header, rows = read_csv(report_path)
    missing = [c for c in REPORT_HEADER if c not in header]
    if missing:
        raise PipelineError(f"{report_path}: missing columns {missing}")
    col = {name: header.index(name) for name in header}
    groups: dict[tuple[str, str], list[list[str]]] = {}
    for r in rows:
        groups.setdefault((r[col["pattern"]], r[col["budget"]]), []).append(r)
    numeric = ["ssim", "undersampled_psnr_db", "reconstruction_psnr_db", "psnr_gain_db"]
    out = []
    for (pattern, budget), members in groups.items():
        ok = [m for m in members if m[col["status"]] == "ok"]
        means = [format_number(float(np.mean([float(m[col[c]]) for m in ok]))) if ok else "nan" for c in numeric]
        out.append([pattern, budget, str(len(ok)), str(len(members) - len(ok))] + means)
    return out


SUMMARY_HEADER = ["pattern", "budget", "rows_ok", "rows_failed", "mean_ssim", "mean_undersampled_psnr_db",
                  "mean_reconstruction_psnr_db", "mean_psnr_gain_db"]
