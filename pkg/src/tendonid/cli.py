"""Command-line pipeline driver.

Subcommands cover the full experimental loop: gen-data, identify,
validate, reconstruct, mpc, report, and run-all which chains them.
Exit codes: 0 ok, 2 config/usage error, 3 data error, 4 numeric
failure, 5 infeasible control. Errors print one machine-parseable line
"ERR <KIND>: message" on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, dump_run_config, load_run_config
from .dataset import Dataset, TimeSeries, load_csv, save_csv
from .errors import ConfigError, DataError, InfeasibleError, NumericError
from .kinematics import mean_euclidean_error, reconstruct_joints, \
    trajectory_forward_kinematics
from .models import ArxModel, SindyModel, StateSpaceModel, fit_percent, \
    initial_condition_for, load_model, save_model, simulate
from .mpc import MpcController, Observer, petal_reference, run_closed_loop, \
    step_reference
from .plantsim import ExcitationSpec, generate_excitation, simulate_plant

METHODS = ("n4sid", "arx", "sindyc")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_trajectory(path, t, Q, names):
    rows = ([_fmt(t[k])] + [_fmt(v) for v in Q[k]] for k in range(len(t)))
    _write_rows(path, ["t"] + list(names), rows)


def _read_trajectory(path, channels: int = 2):
    """CSV with a t column plus a fixed number of value columns."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[0].strip() != "t":
                raise DataError(f"{path}: expected a header starting with 't'")
            if len(header) < channels + 1:
                raise DataError(f"{path}: expected {channels} value columns")
            data = [[float(x) for x in row[:channels + 1]] for row in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from exc
    if not data:
        raise DataError(f"{path}: no data rows")
    arr = np.array(data)
    return arr[:, 0], arr[:, 1:channels + 1]


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pipeline stages (shared by individual commands and run-all)

def gen_data(cfg: RunConfig, out_dir: Path) -> tuple[Path, Path]:
    """Training record: circle sweep then PRBS, one continuous plant run.
    Validation record: an independent multisine at a quarter duration."""
    out_dir.mkdir(parents=True, exist_ok=True)
    dt = cfg.sample_time_s
    half = cfg.excitation_duration_s / 2
    amp = cfg.excitation_amplitude_N
    bias = cfg.plant.force_bias_N
    u_circle = generate_excitation(
        ExcitationSpec("circle_sweep", half, amp, cfg.seed, bias), dt)
    u_prbs = generate_excitation(
        ExcitationSpec("prbs", half, amp, cfg.seed + 1, bias), dt)
    u_train = TimeSeries(dt, np.vstack([u_circle.values, u_prbs.values]),
                         u_circle.channel_names)
    train = simulate_plant(cfg.plant, u_train)
    u_val = generate_excitation(
        ExcitationSpec("multisine", cfg.excitation_duration_s / 4, amp,
                       cfg.seed + 2, bias), dt)
    val = simulate_plant(cfg.plant, u_val)

    train_path = out_dir / "train.csv"
    val_path = out_dir / "val.csv"
    save_csv(train, train_path)
    save_csv(val, val_path)
    (out_dir / "config.ini").write_text(dump_run_config(cfg))
    return train_path, val_path


def identify(method: str, ds: Dataset, cfg: RunConfig):
    if method == "n4sid":
        from .n4sid import identify_n4sid

        return identify_n4sid(ds, cfg.n4sid)
    if method == "arx":
        from .arx import identify_arx

        return identify_arx(ds, na=cfg.arx_na, nb=cfg.arx_nb, nk=cfg.arx_nk)
    if method == "sindyc":
        from .sindyc import identify_sindyc

        return identify_sindyc(ds, cfg.library, cfg.sindy_threshold)
    raise ConfigError(f"unknown identification method {method!r}")


def validate(model, ds: Dataset, out_prefix: Path):
    init = initial_condition_for(model, ds.inputs.values, ds.outputs.values)
    sim = simulate(model, ds.inputs, init)
    rep = fit_percent(ds.outputs.values, sim.values)
    names = [f"y{i + 1}" for i in range(sim.num_channels)]
    _write_trajectory(str(out_prefix) + "_sim.csv", sim.time, sim.values, names)
    init_note = ("least-squares over leading samples"
                 if isinstance(model, StateSpaceModel)
                 else "measured lag window" if isinstance(model, ArxModel)
                 else "first measured output")
    _write_json(str(out_prefix) + "_fit.json", {
        "per_channel_fit": [float(v) for v in rep.per_channel_fit],
        "mean_fit": float(rep.mean_fit),
        "initial_state": init_note,
    })
    return rep, sim


def reconstruct(t, Q, out_prefix: Path):
    joints = np.array([reconstruct_joints(q1, q2) for q1, q2 in Q])
    ee = trajectory_forward_kinematics(joints)
    _write_trajectory(str(out_prefix) + "_joints.csv", t, joints,
                      [f"q{i + 1}" for i in range(6)])
    _write_trajectory(str(out_prefix) + "_ee.csv", t, ee, ["x", "y", "z"])
    return joints, ee


def run_mpc(model, cfg: RunConfig, reference: str, duration_s: float,
            out_prefix: Path, figure: bool = False):
    if isinstance(model, ArxModel):
        raise DataError("closed loop takes a state-space or sparse model; "
                        "ARX has no state observer here")
    dt = cfg.mpc.sample_time_s
    steps = int(round(duration_s / dt))
    need = steps + cfg.mpc.horizon + 1
    if reference == "petal":
        ref = petal_reference(need, dt)
    elif reference == "step":
        ref = step_reference(need, dt)
    else:
        _, ref = _read_trajectory(reference)
        if ref.shape[0] < need:
            raise DataError(f"reference file too short: {ref.shape[0]} rows, "
                            f"need {need}")
    controller = MpcController(model, cfg.mpc, Observer())
    log = run_closed_loop(cfg.plant, controller, ref, duration_s)
    log.to_csv(str(out_prefix) + "_log.csv")
    infeasible = sum(1 for s in log.status if s.startswith(("infeasible",
                                                            "diverged")))
    _write_json(str(out_prefix) + "_summary.json", {
        "rms_error_rad": log.rms_error_rad(),
        "max_solve_ms": log.max_solve_ms(),
        "clip_events": log.clip_events,
        "steps": log.num_steps,
        "infeasible_steps": infeasible,
    })
    if figure:
        from .figures import tracking_figure

        tracking_figure(str(out_prefix) + "_tracking.png", log)
    if infeasible == log.num_steps:
        raise InfeasibleError("controller was infeasible at every step")
    return log


def report(out_dir: Path, figures: bool = False) -> str:
    """Method-by-fit comparison assembled from validation artifacts."""
    fits = {}
    for m in METHODS:
        p = out_dir / f"val_{m}_fit.json"
        if p.exists():
            with open(p) as fh:
                fits[m] = json.load(fh)
        else:
            fits[m] = None

    lines = [f"{'method':<8} {'fit_y1':>8} {'fit_y2':>8} {'mean':>8}"]
    for m in METHODS:
        f = fits[m]
        if f is None:
            lines.append(f"{m:<8} {'absent':>8} {'absent':>8} {'absent':>8}")
        else:
            c = f["per_channel_fit"]
            lines.append(f"{m:<8} {c[0]:>8.2f} {c[1]:>8.2f} "
                         f"{f['mean_fit']:>8.2f}")
    table = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(table)

    # long-format series for external plotting
    rows = []
    val_path = out_dir / "val.csv"
    if val_path.exists():
        ds = load_csv(val_path)
        t = ds.outputs.time
        for i in range(ds.num_outputs):
            for k in range(ds.num_samples):
                rows.append([f"measured_y{i + 1}", _fmt(t[k]),
                             _fmt(ds.outputs.values[k, i])])
    for m in METHODS:
        p = out_dir / f"val_{m}_sim.csv"
        if not p.exists():
            continue
        t, Q = _read_trajectory(p)
        for i in range(Q.shape[1]):
            for k in range(len(t)):
                rows.append([f"{m}_y{i + 1}", _fmt(t[k]), _fmt(Q[k, i])])
    _write_rows(out_dir / "report_long.csv", ["series", "t", "value"], rows)

    if figures:
        from .figures import comparison_figure, validation_figure
        from .models import FitReport

        reps = {m: FitReport(np.array(f["per_channel_fit"]))
                for m, f in fits.items() if f is not None}
        if reps:
            comparison_figure(out_dir / "comparison.png", reps)
        if val_path.exists():
            ds = load_csv(val_path)
            preds = {}
            for m in METHODS:
                p = out_dir / f"val_{m}_sim.csv"
                if p.exists():
                    preds[m] = _read_trajectory(p)[1]
            if preds:
                validation_figure(out_dir / "validation.png", ds, preds)
    return table


# ---------------------------------------------------------------------------
# command handlers

def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    train_path, val_path = gen_data(cfg, Path(args.out))
    print(f"wrote {train_path} and {val_path}")
    return 0


def cmd_identify(args) -> int:
    cfg = load_run_config(args.config)
    if args.threshold is not None:
        cfg.sindy_threshold = args.threshold
    if args.order is not None:
        from .n4sid import N4sidConfig

        cfg.n4sid = N4sidConfig(block_rows_i=cfg.n4sid.block_rows_i,
                                order=args.order,
                                sv_threshold=cfg.n4sid.sv_threshold)
    ds = load_csv(args.data)
    model = identify(args.method, ds, cfg)
    save_model(model, args.out)
    if isinstance(model, StateSpaceModel):
        detail = f"order {model.order}"
    elif isinstance(model, ArxModel):
        detail = f"na {int(model.na.max())}, nb {int(model.nb.max())}"
    else:
        active = int(np.count_nonzero(model.coefficients))
        detail = f"{active} active coefficients"
    print(f"identified {args.method} model ({detail}) -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data)
    rep, _ = validate(model, ds, Path(args.out_prefix))
    per = " ".join(f"y{i + 1}={v:.2f}" for i, v in
                   enumerate(rep.per_channel_fit))
    print(f"fit [%]: {per} mean={rep.mean_fit:.2f}")
    return 0


def cmd_reconstruct(args) -> int:
    t, Q = _read_trajectory(args.data)
    _, ee = reconstruct(t, Q, Path(args.out_prefix))
    if args.compare is not None:
        t2, Q2 = _read_trajectory(args.compare)
        if len(t2) != len(t):
            raise DataError("trajectories to compare differ in length")
        joints2 = np.array([reconstruct_joints(a, b) for a, b in Q2])
        ee2 = trajectory_forward_kinematics(joints2)
        err = mean_euclidean_error(ee2, ee)
        _write_json(str(args.out_prefix) + "_summary.json",
                    {"mean_euclidean_error_m": float(err)})
        if args.figure:
            from .figures import end_effector_figure

            end_effector_figure(str(args.out_prefix) + "_ee.png", ee2, ee)
        print(f"mean end-effector error: {err * 100:.3f} cm")
    else:
        print(f"reconstructed {len(t)} samples -> {args.out_prefix}_joints.csv")
    return 0


def cmd_mpc(args) -> int:
    cfg = load_run_config(args.config)
    model = load_model(args.model)
    log = run_mpc(model, cfg, args.reference, args.duration,
                  Path(args.out_prefix), figure=args.figure)
    print(f"rms error {log.rms_error_rad():.4f} rad, "
          f"max solve {log.max_solve_ms():.1f} ms, "
          f"{log.clip_events} clip events")
    return 0


def cmd_report(args) -> int:
    table = report(Path(args.dir), figures=args.figure)
    print(table, end="")
    return 0


def cmd_run_all(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_path, val_path = gen_data(cfg, out)
    train = load_csv(train_path)
    val = load_csv(val_path)
    print("data generated")

    models = {}
    for m in METHODS:
        models[m] = identify(m, train, cfg)
        save_model(models[m], out / f"model_{m}.json")
        print(f"identified {m}")

    for m in METHODS:
        rep, _ = validate(models[m], val, out / f"val_{m}")
        print(f"validated {m}: mean fit {rep.mean_fit:.2f}%")

    t_sim, Q_sim = _read_trajectory(out / "val_sindyc_sim.csv")
    _, ee_sim = reconstruct(t_sim, Q_sim, out / "recon")
    joints_meas = np.array([reconstruct_joints(a, b)
                            for a, b in val.outputs.values])
    ee_meas = trajectory_forward_kinematics(joints_meas)
    err = mean_euclidean_error(ee_meas, ee_sim)
    _write_json(out / "recon_summary.json",
                {"mean_euclidean_error_m": float(err)})
    from .figures import end_effector_figure

    end_effector_figure(out / "end_effector.png", ee_meas, ee_sim)
    print(f"reconstruction error {err * 100:.3f} cm")

    for m, model in (("sindyc", models["sindyc"]), ("n4sid", models["n4sid"])):
        log = run_mpc(model, cfg, "petal", args.mpc_duration,
                      out / f"mpc_{m}", figure=True)
        print(f"mpc with {m}: rms {log.rms_error_rad():.4f} rad, "
              f"max solve {log.max_solve_ms():.1f} ms")

    table = report(out, figures=True)
    print(table, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tendonid",
        description="System identification and MPC toolkit for a "
                    "tendon-driven snake arm (synthetic plant).")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate excitation experiments "
                                        "into train.csv and val.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("identify", help="fit a model to a training CSV")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--threshold", type=float,
                   help="sparsity threshold (sindyc)")
    p.add_argument("--order", type=int, help="model order (n4sid)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("validate", help="free-run simulation fit against "
                                        "a validation CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-prefix", required=True,
                   help="writes <prefix>_sim.csv and <prefix>_fit.json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reconstruct", help="expand a (q1, q2) trajectory "
                                           "to 6 joints and end effector")
    p.add_argument("--data", required=True, help="trajectory CSV (t, q1, q2)")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--compare", help="second trajectory CSV for an "
                                     "end-effector error summary")
    p.add_argument("--figure", action="store_true",
                   help="render an end-effector path figure")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("mpc", help="closed-loop tracking on the synthetic "
                                   "plant")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", default="petal",
                   help="petal, step, or a trajectory CSV path")
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--figure", action="store_true",
                   help="render a tracking figure")
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("report", help="method comparison table from "
                                      "validation artifacts in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--figure", action="store_true",
                   help="render comparison and validation figures")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all", help="full pipeline: gen-data, identify "
                                       "x3, validate x3, reconstruct, mpc, "
                                       "report")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--mpc-duration", type=float, default=30.0)
    p.set_defaults(func=cmd_run_all)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ERR CONFIG: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"ERR DATA: {exc}", file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(f"ERR INFEASIBLE: {exc}", file=sys.stderr)
        return 5
    except NumericError as exc:
        print(f"ERR NUMERIC: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
