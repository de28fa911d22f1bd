"""Command-line front end.

Subcommands: certify, dtw, envelope, lb, falsify, gen-synth, version.
Config files are flat "key = value" ASCII with '#' comments; command-line
flags override file values; DTWCERT_SEED is the seed fallback. Exit codes:
0 ok, 1 usage, 2 data error, 3 internal invariant violation. All float
output uses shortest round-trip decimals so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from .certify import certify_window
from .core import Window, load_csv, load_dataset, sliding_windows, window_labels
from .detectors import make_scorer, select_threshold
from .dtw import dtw_distance, keogh_envelope, keogh_lower_bound
from .errors import ConfigError, DataError, DtwcertError, SingleClass
from .falsify import falsify_windows
from .kernels import BACKEND
from .metrics import certified_curve, point_adjusted_f1, radii_stats, roc_auc
from .smoothing import ANOMALY, SmoothingConfig, percentile_bounds, sample_scores
from .synth import generate, parse_anomaly, save_labels, save_series

USAGE_EXIT, DATA_EXIT, INTERNAL_EXIT = 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    data: str = ""
    labels: str = ""
    train: str = ""
    out: str = "out"
    seq_len: int = 50
    warp_window: int = 4
    sigma: float = 0.5
    samples: int = 1000
    percentile: float = 0.5
    alpha: float = 1e-3
    seed: int = 0
    noise: str = "gaussian"
    detector: str = "knn"
    knn_k: int = 5
    rank: int = 4
    scorer_cmd: str = ""
    proj_direction: str = ""
    scorer_host: str = ""
    scorer_port: int = 0
    threshold_method: str = "train-quantile"
    quantile: float = 0.99
    gamma: float = math.nan  # nan = select via threshold_method
    denoiser: str = "identity"
    budget_max: float = 0.5
    budget_step: float = 0.01
    workers: int = 1
    calib_max: int = 200

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(
            sigma=self.sigma,
            n=self.samples,
            percentile_p=self.percentile,
            alpha=self.alpha,
            seed=self.seed,
            noise=self.noise,
        )

    def budgets(self) -> list[float]:
        count = int(round(self.budget_max / self.budget_step))
        return [round(i * self.budget_step, 10) for i in range(count + 1)]


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config_file(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            kind = _CONFIG_TYPES[key]
            try:
                if kind in ("int", int):
                    values[key] = int(val)
                elif kind in ("float", float):
                    values[key] = float(val)
                else:
                    values[key] = val
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from None
    return values


def build_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = replace(cfg, **load_config_file(args.config))
    overrides = {}
    for name in _CONFIG_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            overrides[name] = flag
    if "seed" not in overrides and (not args.config or "seed" not in load_config_file(args.config)):
        env_seed = os.environ.get("DTWCERT_SEED")
        if env_seed is not None:
            overrides["seed"] = int(env_seed)
    return replace(cfg, **overrides)


def fmt(x) -> str:
    """Shortest round-trip decimal; integral floats print without '.0'."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x) and x == int(x) and abs(x) < 1e16:
            return str(int(x))
        return repr(x)
    return str(x)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _add_run_flags(sub):
    sub.add_argument("--config", default=None)
    sub.add_argument("--data", default=None)
    sub.add_argument("--labels", default=None)
    sub.add_argument("--train", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--sigma", type=float, default=None)
    sub.add_argument("--samples", type=int, default=None)
    sub.add_argument("--percentile", type=float, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    sub.add_argument("--warp-window", dest="warp_window", type=int, default=None)
    sub.add_argument("--detector", default=None)
    sub.add_argument("--threshold-method", dest="threshold_method", default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--scorer-cmd", dest="scorer_cmd", default=None)
    sub.add_argument("--proj-direction", dest="proj_direction", default=None)
    sub.add_argument("--noise", default=None)
    sub.add_argument("--denoiser", default=None)
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--quantile", type=float, default=None)
    sub.add_argument("--knn-k", dest="knn_k", type=int, default=None)
    sub.add_argument("--rank", type=int, default=None)
    sub.add_argument("--budget-max", dest="budget_max", type=float, default=None)
    sub.add_argument("--budget-step", dest="budget_step", type=float, default=None)
    sub.add_argument("--calib-max", dest="calib_max", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="dtwcert")
    subs = parser.add_subparsers(dest="command", required=True)

    certify = subs.add_parser("certify", description="End-to-end certification run")
    _add_run_flags(certify)
    certify.set_defaults(func=cmd_certify)

    for name, func in (("dtw", cmd_dtw), ("lb", cmd_lb)):
        sub = subs.add_parser(name)
        sub.add_argument("a")
        sub.add_argument("b")
        sub.add_argument("--warp-window", dest="warp_window", type=int, default=4)
        sub.add_argument("--norm", default="2", choices=["1", "2", "inf"])
        sub.set_defaults(func=func)

    env = subs.add_parser("envelope")
    env.add_argument("a")
    env.add_argument("--warp-window", dest="warp_window", type=int, default=4)
    env.add_argument("--out", default=None)
    env.set_defaults(func=cmd_envelope)

    falsify = subs.add_parser("falsify", description="Probe certified balls for flips")
    falsify.add_argument("--out", required=True, help="output dir of a prior certify run")
    falsify.add_argument("--trials", type=int, default=1000)
    falsify.add_argument("--seed", type=int, default=7)
    falsify.add_argument(
        "--inflate-radii",
        dest="inflate_radii",
        type=float,
        default=1.0,
        help="harness mutation knob: scales certified radii before probing",
    )
    falsify.set_defaults(func=cmd_falsify)

    synth = subs.add_parser("gen-synth", description="Emit synthetic dataset CSVs")
    synth.add_argument("--kind", default="sine", choices=["sine", "walk"])
    synth.add_argument("--train-length", dest="train_length", type=int, default=600)
    synth.add_argument("--length", type=int, default=400)
    synth.add_argument("--channels", type=int, default=1)
    synth.add_argument("--anomaly", action="append", default=None,
                       help="spike:IDX[:MAG] | level:A-B[:MAG] | warp:A-B[:SHIFT] | none")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--period", type=float, default=100.0)
    synth.add_argument("--amplitude", type=float, default=1.0)
    synth.add_argument("--noise-level", dest="noise_level", type=float, default=0.05)
    synth.add_argument("--out", default="data")
    synth.set_defaults(func=cmd_gen_synth)

    version = subs.add_parser("version")
    version.set_defaults(func=lambda args: print(f"dtwcert {__version__} ({BACKEND} kernels)") or 0)
    return parser


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def _norm_order(text):
    return {"1": 1, "2": 2, "inf": "inf"}[text]


def _atomic_write(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(content)
    os.replace(tmp, path)


def _build_detector(cfg: RunConfig, train_windows):
    params = {}
    if cfg.detector == "knn":
        params["k"] = cfg.knn_k
    elif cfg.detector == "reconstruction":
        params["rank"] = cfg.rank
    elif cfg.detector == "proj":
        params["direction"] = cfg.proj_direction
    elif cfg.detector == "external":
        if cfg.scorer_cmd:
            params["cmd"] = cfg.scorer_cmd
        else:
            params["host"] = cfg.scorer_host or None
            params["port"] = cfg.scorer_port or None
    return make_scorer(cfg.detector, train_windows, **params)


def _calibration_gamma(cfg: RunConfig, scfg, detector, train_windows, test_samples, labels):
    if not math.isnan(cfg.gamma):
        return cfg.gamma, "explicit"
    if cfg.threshold_method == "train-quantile":
        # calibrate on the benign upper confidence score so benign windows can
        # actually certify: the bracket around the smoothed score is much wider
        # than the spread of the smoothed scores themselves
        count = min(cfg.calib_max, len(train_windows))
        idx = sorted(set(np.linspace(0, len(train_windows) - 1, count).round().astype(int)))
        scores = []
        for i in idx:
            samples = sample_scores(detector, train_windows[i], scfg)
            bounds = percentile_bounds(samples, scfg.percentile_p, 0.0, scfg.alpha)
            scores.append(
                bounds.upper if not bounds.vacuous_hi else float(samples.sorted[-1])
            )
        return select_threshold(scores, "train-quantile", q=cfg.quantile).gamma, cfg.threshold_method
    if cfg.threshold_method == "best-f1-scan":
        scores = [s.empirical_percentile() for s in test_samples]
        return (
            select_threshold(scores, "best-f1-scan", labels=labels).gamma,
            cfg.threshold_method,
        )
    raise ConfigError(f"unknown threshold method {cfg.threshold_method!r}")


def cmd_certify(args) -> int:
    cfg = build_run_config(args)
    if not (cfg.data and cfg.labels and cfg.train):
        print("certify needs --data, --labels and --train", file=sys.stderr)
        return USAGE_EXIT
    scfg = cfg.smoothing()
    ds = load_dataset(cfg.train, cfg.data, cfg.labels)
    test_windows = sliding_windows(ds.test, cfg.seq_len)
    labels = window_labels(ds.test_labels, cfg.seq_len)
    train_windows = sliding_windows(ds.train, cfg.seq_len)
    detector = _build_detector(cfg, train_windows)

    from .certify import DENOISERS, _DenoisedScorer

    denoise = DENOISERS[cfg.denoiser]
    effective = detector if denoise is None else _DenoisedScorer(detector, denoise)

    def one_sample(win):
        return sample_scores(effective, win, scfg)

    if cfg.workers > 1 and getattr(effective, "reentrant", False):
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            test_samples = list(pool.map(one_sample, test_windows))
    else:
        test_samples = [one_sample(win) for win in test_windows]

    gamma, gamma_source = _calibration_gamma(
        cfg, scfg, effective, train_windows, test_samples, labels
    )
    results = [
        certify_window(win, detector, scfg, cfg.warp_window, gamma,
                       denoiser=cfg.denoiser, samples=smp)
        for win, smp in zip(test_windows, test_samples)
    ]

    os.makedirs(cfg.out, exist_ok=True)
    written = []
    try:
        rows = ["origin_index,label,decision,r,e,R,M,q_lo,q_hi,abstain"]
        for res, label in zip(results, labels):
            rows.append(
                ",".join(
                    [
                        str(res.origin_index),
                        str(int(label)),
                        res.decision,
                        fmt(res.l2_radius),
                        fmt(res.dtw_radius),
                        fmt(res.slack_total),
                        fmt(res.slack_row_max),
                        str(res.q_lo),
                        str(res.q_hi),
                        str(int(res.abstained)),
                    ]
                )
            )
        path = os.path.join(cfg.out, "results.csv")
        _atomic_write(path, "\n".join(rows) + "\n")
        written.append(path)

        preds = np.array([1 if r.point_decision == ANOMALY else 0 for r in results])
        smoothed = np.array([r.smoothed_score for r in results])
        f1 = point_adjusted_f1(preds, labels)
        try:
            auc = roc_auc(smoothed, labels)
        except SingleClass:
            auc = math.nan
        stats = radii_stats(results)
        header = "f1,roc_auc,radii_mean,radii_max,radii_std,certified_proportion"
        line = ",".join(
            fmt(v)
            for v in (f1, auc, stats.mean, stats.max, stats.std, stats.certified_proportion)
        )
        path = os.path.join(cfg.out, "stats.csv")
        _atomic_write(path, header + "\n" + line + "\n")
        written.append(path)

        budgets = cfg.budgets()
        evasion = certified_curve(results, labels, budgets, "evasion")
        avail = certified_curve(results, labels, budgets, "availability")
        rows = ["budget,evasion_certified_accuracy,evasion_certified_f1,"
                "availability_certified_accuracy,availability_certified_f1"]
        for i, t in enumerate(budgets):
            rows.append(
                ",".join(
                    fmt(v)
                    for v in (
                        t,
                        evasion.certified_accuracy[i],
                        evasion.certified_f1[i],
                        avail.certified_accuracy[i],
                        avail.certified_f1[i],
                    )
                )
            )
        path = os.path.join(cfg.out, "curves.csv")
        _atomic_write(path, "\n".join(rows) + "\n")
        written.append(path)

        meta = {
            # out is where this file lives; leaving it out keeps reruns into
            # different directories byte-identical
            "config": {f.name: getattr(cfg, f.name) for f in fields(RunConfig)
                       if f.name != "out"},
            "gamma": gamma,
            "gamma_source": gamma_source,
            "kernel_backend": BACKEND,
            "normalization": "per-channel z-score with train statistics, std floored at 1e-8",
            "abstain_policy": "straddling confidence interval at r=0 abstains with radius 0",
            "radius_transfer": "exact" if scfg.noise == "gaussian" else "conservative",
            "windows": len(results),
        }
        path = os.path.join(cfg.out, "run_meta.json")
        _atomic_write(path, json.dumps(meta, sort_keys=True, indent=2) + "\n")
        written.append(path)
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    print(f"certified {len(results)} windows -> {cfg.out} "
          f"(gamma={fmt(gamma)}, certified proportion {fmt(stats.certified_proportion)})")
    return 0


# ---------------------------------------------------------------------------
# debugging subcommands
# ---------------------------------------------------------------------------

def _load_window(path) -> Window:
    series = load_csv(path)
    return Window(series.values, origin_index=series.length - 1)


def cmd_dtw(args) -> int:
    a, b = _load_window(args.a), _load_window(args.b)
    print(fmt(dtw_distance(a, b, args.warp_window, _norm_order(args.norm))))
    return 0


def cmd_lb(args) -> int:
    a, b = _load_window(args.a), _load_window(args.b)
    env = keogh_envelope(a, args.warp_window)
    print(fmt(keogh_lower_bound(env, b, _norm_order(args.norm))))
    return 0


def cmd_envelope(args) -> int:
    window = _load_window(args.a)
    env = keogh_envelope(window, args.warp_window)
    names = [f"ch{i}" for i in range(window.channels)]
    rows = [",".join([f"U_{n}" for n in names] + [f"L_{n}" for n in names])]
    for i in range(window.seq_len):
        rows.append(
            ",".join([fmt(float(v)) for v in env.upper[i]] + [fmt(float(v)) for v in env.lower[i]])
        )
    text = "\n".join(rows) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# falsify
# ---------------------------------------------------------------------------

def _read_results_csv(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = dict(zip(header, line.split(",")))
        out.append(cells)
    return out


def cmd_falsify(args) -> int:
    meta_path = os.path.join(args.out, "run_meta.json")
    results_path = os.path.join(args.out, "results.csv")
    if not os.path.exists(meta_path) or not os.path.exists(results_path):
        print(f"error: no certify outputs under {args.out}", file=sys.stderr)
        return DATA_EXIT
    with open(meta_path, "r", encoding="ascii") as fh:
        meta = json.load(fh)
    cfg = RunConfig(**meta["config"])
    gamma = float(meta["gamma"])
    scfg = cfg.smoothing()
    ds = load_dataset(cfg.train, cfg.data, cfg.labels)
    test_windows = {w.origin_index: w for w in sliding_windows(ds.test, cfg.seq_len)}
    train_windows = sliding_windows(ds.train, cfg.seq_len)
    detector = _build_detector(cfg, train_windows)

    certified = []
    for row in _read_results_csv(results_path):
        certified.append(
            (test_windows[int(row["origin_index"])], row["decision"], float(row["e"]))
        )
    report = falsify_windows(
        certified,
        detector,
        scfg,
        cfg.warp_window,
        gamma,
        probes=args.trials,
        seed=args.seed,
        denoiser=cfg.denoiser,
        inflate_radii=args.inflate_radii,
    )
    print(f"windows examined: {report.examined_windows} (skipped {report.skipped_windows} "
          f"with zero radius)")
    print(f"probes inside certified balls: {report.probes}")
    print(f"fresh-seed abstains: {report.abstains}")
    print(f"decision flips: {report.flips} (fail threshold {report.flip_threshold})")
    for detail in report.flip_details[:10]:
        print(f"  flip at origin {detail['origin_index']}: certified {detail['certified']} "
              f"vs fresh {detail['fresh']} at DTW {fmt(detail['dtw'])}")
    if report.failed:
        print("FAIL: certified decisions flipped inside their DTW balls", file=sys.stderr)
        return INTERNAL_EXIT
    print("PASS")
    return 0


# ---------------------------------------------------------------------------
# gen-synth
# ---------------------------------------------------------------------------

def cmd_gen_synth(args) -> int:
    specs = args.anomaly or ["spike:200", "warp:280-340:6"]
    if specs == ["none"]:
        specs = []
    anomalies = [parse_anomaly(a) for a in specs]
    train, test, labels = generate(
        args.kind,
        args.train_length,
        args.length,
        args.channels,
        anomalies,
        args.seed,
        period=args.period,
        amplitude=args.amplitude,
        noise_level=args.noise_level,
    )
    os.makedirs(args.out, exist_ok=True)
    save_series(os.path.join(args.out, "train.csv"), train)
    save_series(os.path.join(args.out, "test.csv"), test)
    save_labels(os.path.join(args.out, "test_labels.csv"), labels)
    print(f"wrote train/test/labels under {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except DtwcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
