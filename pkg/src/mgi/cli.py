"""Command-line driver: ``mgi gen-object | simulate | reconstruct | compare | metrics``.

Exit codes: 0 success, 2 configuration error, 3 file error, 4 numerical
failure.  Every command is deterministic given its inputs and seed; the
optional ``runtime`` CSV column is only filled with ``--timing``.
"""

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (
    EstimabilityError,
    ImagingImpossibleError,
    InvalidInputError,
    NonConvergenceError,
    SingularCovarianceError,
)
from .io import load_config, read_measurement, read_pgm, write_pgm
from .optics import OpticalSetup, ReferenceArm, magnification, required_focal_length
from .reduction import PipelineConfig, Reducer, metrics, run_pipeline
from .sensing import DEFAULT_FRAMES, DetectorGeometry, make_model
from .sim import AcquisitionConfig, gen_object, simulate_gi, simulate_ordinary
from .transforms import SparsityBasis

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

CSV_COLUMNS = ("lambda", "basis", "mse", "psnr", "worst_case_mse", "converged", "runtime")
BASIS_ALIASES = {"none": "none", "identity": "identity", "dct": "dct2", "dct2": "dct2",
                 "haar": "haar2", "haar2": "haar2"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _floats(text):
    try:
        vals = [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise InvalidInputError(f"not a list of numbers: {text!r}") from None
    return vals


def _seeds(text):
    """``"7"``, ``"0,3,5"`` or an inclusive range ``"0-9"``."""
    out = []
    for part in str(text).replace(",", " ").split():
        lo, sep, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(part)])
        except ValueError:
            raise InvalidInputError(f"bad seed list {text!r}") from None
    if not out:
        raise InvalidInputError("empty seed list")
    return out


def _bases(text):
    out = []
    for name in str(text).replace(",", " ").split():
        if name.lower() not in BASIS_ALIASES:
            raise InvalidInputError(f"unknown basis {name!r}")
        out.append(BASIS_ALIASES[name.lower()])
    if not out:
        raise InvalidInputError("empty basis list")
    return out


@dataclass
class ExperimentConfig:
    """Everything a run depends on.  Keys of a config file are the field names."""

    width: int = 64
    height: int = 64
    detector_size: int = 3
    placement: str = "sliding"
    photons_per_pixel: float = 1.0
    noise_photons_per_pixel: float = 0.0
    p_acc: float = 0.1
    frames: float = DEFAULT_FRAMES
    noise_mode: str = "gaussian"
    dark_variance: float = 0.0
    seeds: list = field(default_factory=lambda: [0])
    basis: list = field(default_factory=lambda: ["haar2"])
    lambdas: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    haar_levels: int = None
    out_dir: str = "."
    # optional optical setup (cm and cm^-1); used to report focal lengths
    k1: float = None
    k3: float = None
    l11: float = None
    l12: float = None
    l21: float = None
    l22: float = None
    l31: float = None
    l32: float = None
    l41: float = None
    l42: float = None

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("grid sides must be >= 1")
        if not self.lambdas:
            raise InvalidInputError("lambda list must not be empty")
        if any(lam < 0 for lam in self.lambdas):
            raise InvalidInputError("lambda values must be >= 0")
        AcquisitionConfig(self.photons_per_pixel, self.noise_photons_per_pixel,
                          noise_mode=self.noise_mode, p_acc=self.p_acc, frames=self.frames)
        DetectorGeometry(self.width, self.height, self.detector_size, self.placement)
        return self

    def geometry(self):
        return DetectorGeometry(self.width, self.height, self.detector_size, self.placement)

    def model(self, ordinary=False):
        return make_model(self.geometry(), self.photons_per_pixel, self.noise_photons_per_pixel,
                          p_acc=self.p_acc, dark_variance=self.dark_variance, ordinary=ordinary,
                          frames=self.frames)

    def model_block(self):
        keys = ("width", "height", "detector_size", "placement", "photons_per_pixel",
                "noise_photons_per_pixel", "p_acc", "frames", "noise_mode", "dark_variance")
        return {k: getattr(self, k) for k in keys}

    def optical_setup(self):
        base = (self.k1, self.k3, self.l11, self.l12)
        if all(v is None for v in base):
            return None
        if any(v is None for v in base):
            raise InvalidInputError("optical setup needs k1, k3, l11 and l12")
        arms = {}
        for j in (2, 3, 4):
            l1, l2 = getattr(self, f"l{j}1"), getattr(self, f"l{j}2")
            if (l1 is None) != (l2 is None):
                raise InvalidInputError(f"arm {j} needs both l{j}1 and l{j}2")
            if l1 is not None:
                arms[j] = ReferenceArm(l1, l2)
        return OpticalSetup.from_frequency_relations(self.k1, self.k3, self.l11, self.l12, arms)


_CONVERTERS = {
    "width": int, "height": int, "detector_size": int, "placement": str,
    "photons_per_pixel": float, "noise_photons_per_pixel": float, "p_acc": float, "frames": float,
    "noise_mode": str, "dark_variance": float, "seeds": _seeds, "seed": _seeds,
    "basis": _bases, "lambdas": _floats, "haar_levels": int, "out_dir": str,
}
_CONVERTERS.update({k: float for k in ("k1", "k3", "l11", "l12", "l21", "l22", "l31", "l32", "l41", "l42")})


def load_experiment(path=None, overrides=None):
    """ExperimentConfig from an optional key = value file, then ``overrides``.

    ``seed`` is accepted as a synonym of ``seeds``.
    """
    values = {}
    if path is not None:
        try:
            values = load_config(path, _CONVERTERS)
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    if "seed" in values:
        if "seeds" in values:
            raise InvalidInputError("give either 'seed' or 'seeds', not both")
        values["seeds"] = values.pop("seed")
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return ExperimentConfig(**values).validate()


def _optics_report(cfg):
    setup = cfg.optical_setup()
    if setup is None:
        return {}
    report = {}
    for j in sorted(setup.arms):
        report[f"arm{j}"] = {"focal_length_cm": required_focal_length(setup, j),
                             "magnification": magnification(setup, j)}
    return {"optics": report}


# --- file helpers -----------------------------------------------------------

def _read_object(path):
    try:
        return read_pgm(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except InvalidInputError as exc:
        raise CliError(str(exc), EXIT_IO) from exc


def _read_meas(path):
    try:
        return read_measurement(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    except InvalidInputError as exc:
        raise CliError(str(exc), EXIT_IO) from exc


def _derived_path(path, tag):
    p = Path(path)
    return p.with_name(f"{p.stem}_{tag}{p.suffix}")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


# --- gen-object -------------------------------------------------------------

def cmd_gen_object(args):
    width = args.width or args.size
    height = args.height or args.size
    pattern = args.pattern.replace("-", "_")
    params = {}
    if pattern == "two_slit":
        params = dict(bar_width=args.bar_width, gap=args.gap, bar_length=args.bar_length)
    elif pattern == "constant":
        params = {"value": args.value}
    elif pattern == "bitmap":
        if args.file is None:
            raise InvalidInputError("bitmap needs --file")
        img = _read_object(args.file)
        if args.width is None and args.height is None and args.size is None:
            height, width = img.shape
        params = {"path": args.file}
    width = width or 64
    height = height or 64
    obj = gen_object(pattern, width, height, **params)
    try:
        write_pgm(args.out, obj.reshape(height, width))
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(f"wrote {args.out} ({width}x{height})")
    return EXIT_OK


# --- simulate ---------------------------------------------------------------

def _model_overrides(args):
    return {
        "detector_size": getattr(args, "detector_size", None),
        "placement": getattr(args, "placement", None),
        "photons_per_pixel": getattr(args, "photons", None),
        "noise_photons_per_pixel": getattr(args, "noise_photons", None),
        "p_acc": getattr(args, "p_acc", None),
        "frames": getattr(args, "frames", None),
        "noise_mode": getattr(args, "noise_mode", None),
        "dark_variance": getattr(args, "dark_variance", None),
    }


def cmd_simulate(args):
    img = _read_object(args.object)
    height, width = img.shape
    over = _model_overrides(args)
    over.update(width=width, height=height)
    if args.seed is not None:
        over["seeds"] = _seeds(args.seed)
    cfg = load_experiment(args.config, over)
    f = img.ravel()
    model = cfg.model()
    extra = {"model": cfg.model_block(), **_optics_report(cfg)}
    written = []
    for seed in cfg.seeds:
        acq = AcquisitionConfig(cfg.photons_per_pixel, cfg.noise_photons_per_pixel, seed,
                                cfg.noise_mode, 3, cfg.p_acc, cfg.frames)
        path = Path(args.out) if len(cfg.seeds) == 1 else _derived_path(args.out, f"s{seed}")
        meas = simulate_gi(f, model, acq)
        _save(meas, path, extra)
        written.append(path)
        if args.ordinary:
            om = simulate_ordinary(f, acq, cfg.geometry(), cfg.dark_variance)
            opath = _derived_path(path, "ordinary")
            _save(om, opath, extra)
            written.append(opath)
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _save(meas, path, extra):
    try:
        meas.save(path, extra)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


# --- reconstruct ------------------------------------------------------------

def _model_for(meta, args, shape):
    """Rebuild the sensing model of a measurement and check its fingerprint."""
    arms, rows, cols = shape
    base = dict((meta or {}).get("model", {}))
    over = _model_overrides(args)
    cfg_path = getattr(args, "config", None)
    if cfg_path is not None:
        from_file = load_experiment(cfg_path)
        base.update({k: v for k, v in from_file.model_block().items()})
    base.update({k: v for k, v in over.items() if v is not None})
    if "width" not in base:
        base.update(width=cols, height=rows)
    known = {f.name for f in fields(ExperimentConfig)}
    cfg = ExperimentConfig(**{k: v for k, v in base.items() if k in known}).validate()
    if arms not in (1, 3):
        raise CliError(f"measurement has {arms} arms; expected 3 (ghost) or 1 (ordinary)", EXIT_IO)
    model = cfg.model(ordinary=arms == 1)
    if model.geometry.detector_shape != (rows, cols):
        raise CliError(
            f"detector array {rows}x{cols} does not match the configured geometry "
            f"{model.geometry.detector_shape}", EXIT_CONFIG)
    want = (meta or {}).get("model_fingerprint")
    if want is not None and want != model.fingerprint:
        raise CliError("measurement was acquired with a different sensing model "
                       "(fingerprint mismatch); refusing to reconstruct", EXIT_CONFIG)
    return model, cfg


def _basis(kind, cfg, levels=None):
    if kind == "none":
        return None
    return SparsityBasis(kind, cfg.width, cfg.height, levels if kind == "haar2" else None)


def _runs(bases, lambdas):
    """(basis, lambda) pairs; the no-sparsity run does not depend on lambda."""
    out = []
    for b in bases:
        if b == "none":
            out.append((b, 0.0))
        else:
            out.extend((b, lam) for lam in lambdas)
    return out


def cmd_reconstruct(args):
    xi, shape, meta = _read_meas(args.measurement)
    model, cfg = _model_for(meta, args, shape)
    bases = _bases(args.basis) if args.basis else ["haar2"]
    lambdas = _floats(args.lambdas) if args.lambdas else [1.0, 2.0, 3.0]
    if not lambdas:
        raise InvalidInputError("lambda list must not be empty")
    truth = None
    if args.object is not None:
        truth = _read_object(args.object).ravel()
        if truth.size != model.n:
            raise InvalidInputError(f"object has {truth.size} pixels, model has {model.n}")
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc}", EXIT_IO) from exc

    reducer = Reducer(model)
    rows = []
    for kind, lam in _runs(bases, lambdas):
        pcfg = PipelineConfig(_basis(kind, cfg, args.haar_levels), lam,
                              reestimate_sigma=args.reestimate_sigma)
        t0 = time.perf_counter()
        if pcfg.reestimate_sigma:
            res = run_pipeline(xi, model, pcfg, reducer)
        else:
            res = reducer.pipeline(xi, pcfg)
        runtime = time.perf_counter() - t0 if args.timing else None
        image = res.image.reshape(cfg.height, cfg.width)
        name = out_dir / f"recon_{kind}_lam{lam:g}.pgm"
        try:
            write_pgm(name, image)
            if args.save_float:
                np.save(name.with_suffix(".npy"), image)
        except OSError as exc:
            raise CliError(f"cannot write {name}: {exc}", EXIT_IO) from exc
        m = metrics(res.image, truth) if truth is not None else {"mse": None, "psnr": None}
        rows.append((lam, kind, m["mse"], m["psnr"], reducer.worst_case_mse,
                     res.constrained.converged, runtime))
        print(f"{kind:8s} lambda={lam:<5g} zeroed={res.n_zeroed:6d} "
              + (f"mse={m['mse']:.6g}" if m["mse"] is not None else ""))
    _write_csv(out_dir / "metrics.csv", CSV_COLUMNS, rows)
    print(f"wrote {out_dir / 'metrics.csv'}")
    return EXIT_OK


# --- compare ----------------------------------------------------------------

def _seed_of(meta, fallback):
    try:
        return int(meta["config"]["seed"])
    except (TypeError, KeyError, ValueError):
        return fallback


def compare_rows(gi_files, ord_files, truth, bases, lambdas, args):
    """Per-seed MSE rows ``(seed, basis, lambda, mse_gi, mse_ordinary)``."""
    reducers = {}
    per_seed = []
    for i, (gpath, opath) in enumerate(zip(gi_files, ord_files)):
        result = {}
        for channel, path in (("gi", gpath), ("ordinary", opath)):
            xi, shape, meta = _read_meas(path)
            model, cfg = _model_for(meta, args, shape)
            if truth.size != model.n:
                raise InvalidInputError(f"object has {truth.size} pixels, model has {model.n}")
            red = reducers.get(model.fingerprint)
            if red is None:
                red = reducers[model.fingerprint] = Reducer(model)
            if channel == "gi":
                seed = _seed_of(meta, i)
            for kind, lam in _runs(bases, lambdas):
                res = red.pipeline(xi, PipelineConfig(_basis(kind, cfg), lam))
                result[(kind, lam, channel)] = metrics(res.image, truth)["mse"]
        for kind, lam in _runs(bases, lambdas):
            per_seed.append((seed, kind, lam, result[(kind, lam, "gi")],
                             result[(kind, lam, "ordinary")]))
    return per_seed


def summarize(per_seed):
    """Per (basis, lambda) cell: mean MSEs, seed count, GI wins and ties."""
    cells = {}
    for seed, kind, lam, g, o in per_seed:
        cells.setdefault((kind, lam), []).append((g, o))
    out = []
    for (kind, lam), vals in cells.items():
        g = np.array([v[0] for v in vals])
        o = np.array([v[1] for v in vals])
        tie = np.isclose(g, o, rtol=1e-9, atol=1e-12)
        out.append((kind, lam, float(g.mean()), float(o.mean()), len(vals),
                    int(np.sum((g < o) & ~tie)), int(np.sum(tie))))
    return out


def cmd_compare(args):
    gi, ordinary = args.gi, args.ordinary
    if len(gi) != len(ordinary):
        raise InvalidInputError("need one ordinary measurement per ghost-image measurement")
    truth = _read_object(args.object).ravel()
    bases = _bases(args.bases)
    lambdas = _floats(args.lambdas)
    if not lambdas:
        raise InvalidInputError("lambda list must not be empty")
    per_seed = compare_rows(gi, ordinary, truth, bases, lambdas, args)
    summary = summarize(per_seed)
    _write_csv(args.out, ("seed", "basis", "lambda", "mse_gi", "mse_ordinary", "gi_better"),
               [row + (row[3] < row[4],) for row in per_seed])
    spath = _derived_path(args.out, "summary")
    _write_csv(spath, ("basis", "lambda", "mean_mse_gi", "mean_mse_ordinary", "seeds",
                       "gi_wins", "ties"), summary)
    print("| basis | lambda | mean MSE (GI) | mean MSE (ordinary) | seeds | GI wins | ties |")
    print("|---|---|---|---|---|---|---|")
    for kind, lam, g, o, n, wins, ties in summary:
        print(f"| {kind} | {lam:g} | {g:.6g} | {o:.6g} | {n} | {wins} | {ties} |")
    print(f"wrote {args.out} and {spath}")
    return EXIT_OK


# --- metrics ----------------------------------------------------------------

def cmd_metrics(args):
    est = _read_object(args.estimate)
    ref = _read_object(args.object)
    m = metrics(est, ref)
    print("mse,psnr")
    print(f"{_fmt(m['mse'])},{_fmt(m['psnr'])}")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------

def _add_model_flags(p):
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--detector-size", type=int, help="detector side in pixels (default 3)")
    p.add_argument("--placement", choices=("sliding", "tiled"))
    p.add_argument("--photons", type=float, help="photons per pixel")
    p.add_argument("--noise-photons", type=float, help="noise photons per pixel")
    p.add_argument("--p-acc", type=float, help="coincidence acceptance of noise photons")
    p.add_argument("--frames", type=float, help=f"exposures per correlator output (default {DEFAULT_FRAMES})")
    p.add_argument("--noise-mode", choices=("gaussian", "poisson"))
    p.add_argument("--dark-variance", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mgi", description="Multiplexed ghost imaging: simulation and measurement reduction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-object", help="write a test object as PGM")
    p.add_argument("pattern", choices=("two-slit", "two_slit", "constant", "bitmap"))
    p.add_argument("--size", type=int, help="square grid side")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--value", type=float, default=1.0, help="transparency for 'constant'")
    p.add_argument("--file", help="source PGM for 'bitmap'")
    p.add_argument("--bar-width", type=int)
    p.add_argument("--gap", type=int)
    p.add_argument("--bar-length", type=int)
    p.add_argument("--out", default="object.pgm")
    p.set_defaults(func=cmd_gen_object)

    p = sub.add_parser("simulate", help="acquire ghost images (and optionally an ordinary image)")
    p.add_argument("--object", required=True)
    p.add_argument("--seed", help="seed, list '0,3' or range '0-9'")
    p.add_argument("--ordinary", action="store_true", help="also write the direct-image baseline")
    p.add_argument("--out", default="gi.meas")
    _add_model_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the reduction pipeline over bases and lambdas")
    p.add_argument("--measurement", required=True)
    p.add_argument("--basis", help="comma list of none, identity, dct2, haar2")
    p.add_argument("--lambdas", help="comma list, e.g. 1,2,3")
    p.add_argument("--haar-levels", type=int)
    p.add_argument("--object", help="true object, for MSE/PSNR")
    p.add_argument("--out-dir", default="recon")
    p.add_argument("--timing", action="store_true", help="fill the runtime column")
    p.add_argument("--save-float", action="store_true", help="also write .npy images")
    p.add_argument("--reestimate-sigma", action="store_true")
    _add_model_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("compare", help="ghost vs ordinary images over seeds")
    p.add_argument("--gi", nargs="+", required=True)
    p.add_argument("--ordinary", nargs="+", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--bases", default="none,dct2")
    p.add_argument("--lambdas", default="1.25")
    p.add_argument("--out", default="compare.csv")
    _add_model_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", help="MSE and PSNR of an image against the object")
    p.add_argument("--estimate", required=True)
    p.add_argument("--object", required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mgi: error: {exc}", file=sys.stderr)
        return exc.code
    except (NonConvergenceError, SingularCovarianceError, EstimabilityError) as exc:
        print(f"mgi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, ImagingImpossibleError) as exc:
        print(f"mgi: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mgi: file error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
