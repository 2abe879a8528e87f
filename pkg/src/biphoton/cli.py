"""Command-line front end.

    biphoton phasematch --detuning -1.1,+1.0 --theta 0:3:0.01 --csv scan.csv
    biphoton phasematch --find-optimum --detuning -1.1
    biphoton simulate --experiment pairs --preset paper-2023 --seed 7 -o run.bpl
    biphoton g2 run.bpl --csv g2.csv
    biphoton herald run.bpl
    biphoton autocorr split.bpl
    biphoton hom hom.bpl
    biphoton analyze run.bpl --g2
    biphoton selftest

Results go to stdout as JSON (and optionally to files).  Exit codes: 0 ok,
2 usage, 3 unreadable input, 4 analysis undefined (e.g. an empty channel).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, correlate, phasematch, presets
from .config import ConfigError, ConfigParseError, RunConfig, load
from .sim import CHANNELS, ResourceLimitError, simulate_heralded_autocorr, simulate_hom_experiment, simulate_pairs
from .tagstream import StreamFormatError, read_csv, read_stream, write_stream

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_UNDEFINED = 0, 2, 3, 4
SEED_ENV = "BIPHOTON_SEED"


class UsageError(Exception):
    pass


def parse_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc
    if not vals:
        raise UsageError("empty list")
    return vals


def parse_grid(text) -> np.ndarray:
    """``start:stop:step`` (stop included), a comma list, or a list of numbers."""
    if isinstance(text, (list, tuple)):
        vals = np.asarray(text, dtype=float)
    elif ":" in str(text):
        parts = str(text).split(":")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError as exc:
            raise UsageError(f"bad grid {text!r}; expected start:stop:step") from exc
        if step <= 0 or stop < start:
            raise UsageError(f"bad grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = start + step * np.arange(n)
    else:
        vals = np.asarray(parse_list(text))
    if vals.size == 0:
        raise UsageError("empty grid")
    return vals


def _emit(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    print(text)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _write_text(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _run_config(args) -> RunConfig:
    cfg = load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "threads", None):
        cfg.threads = args.threads
    return cfg


# ---------------------------------------------------------------- phasematch

def cmd_phasematch(args) -> int:
    cfg = _run_config(args)
    g = cfg.geometry
    for key, flag in (("lambda_sp_nm", args.lambda_sp_nm), ("lambda_pd_nm", args.lambda_pd_nm),
                      ("cell_length_mm", args.cell_length_mm)):
        if flag is not None:
            g[key] = flag
    det = args.detuning if args.detuning is not None else g.get("detuning_ghz", [-1.1, 1.0])
    detunings = parse_list(",".join(str(x) for x in det) if isinstance(det, list) else det)
    theta_spec = args.theta if args.theta is not None else g.get("theta_deg", "0:3:0.01")
    thetas_deg = parse_grid(theta_spec)
    coll_deg = args.collection_angle if args.collection_angle is not None else g.get("collection_angle_deg", 1.4)
    if np.any(thetas_deg < 0) or np.any(thetas_deg >= 90):
        raise UsageError("theta must lie in [0, 90) degrees")
    try:
        base = cfg.optical_geometry()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    scan = phasematch.scan_phase_matching(np.radians(thetas_deg), [phasematch.ghz(d) for d in detunings],
                                          base, small_angle=args.small_angle)
    if args.csv:
        _write_text(args.csv, scan.to_csv())

    fn = phasematch.delta_k_small_angle if args.small_angle else phasematch.delta_k_exact
    per = []
    for d in detunings:
        geom = base.with_(pump_detuning=phasematch.ghz(d), signal_angle=math.radians(coll_deg))
        dk = fn(geom)
        entry = {"detuning_ghz": d, "delta_k_rad_per_m": dk,
                 "factor_at_collection": phasematch.phase_match_factor(dk, geom.cell_length)}
        if args.find_optimum:
            opt = phasematch.optimize_geometry(geom)
            entry.update(optimal_angle_deg=math.degrees(opt.optimal_angle), optimal_factor=opt.factor)
        per.append(entry)
    ref = per[0]["factor_at_collection"]
    ratios = {f"{per[0]['detuning_ghz']:+g}/{e['detuning_ghz']:+g}": ref / e["factor_at_collection"]
              for e in per[1:] if e["factor_at_collection"] > 0}
    _emit({
        "command": "phasematch",
        "model": "small_angle" if args.small_angle else "exact",
        "collection_angle_deg": coll_deg,
        "idler_to_signal_angle_ratio": phasematch.idler_angle(1.0, base),
        "detunings": per,
        "ratios_at_collection": ratios,
        "rows": len(scan),
        "config": cfg.to_dict(),
    }, args.json)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _resolve_seed(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    if cfg.seed is not None:
        return cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer") from exc
    raise UsageError(f"a seed is required (--seed, config 'seed' or ${SEED_ENV})")


def _source_overrides(args, cfg: RunConfig):
    if args.preset:
        cfg.source["preset"] = args.preset
    if args.preset_b:
        cfg.source_b["preset"] = args.preset_b
    for key, val in (("pair_rate_hz", args.pair_rate), ("detected_rate_kcps", args.detected_rate_kcps),
                     ("duration_s", args.duration), ("jitter_fwhm_ps", args.jitter_ps),
                     ("dead_time_ns", args.dead_time_ns)):
        if val is not None:
            if key in ("pair_rate_hz", "detected_rate_kcps"):
                cfg.source.pop("pair_rate_hz", None)
                cfg.source.pop("detected_rate_kcps", None)
            cfg.source[key] = val


def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    _source_overrides(args, cfg)
    seed = _resolve_seed(args, cfg)
    cfg.seed = seed
    src_a = cfg.source_config("source", seed)
    if args.experiment == "pairs":
        stream = simulate_pairs(src_a, workers=cfg.threads)
        sources = {"source": src_a.to_dict()}
    elif args.experiment == "autocorr":
        stream = simulate_heralded_autocorr(src_a, splitter_seed=seed ^ 0x5EED, workers=cfg.threads)
        sources = {"source": src_a.to_dict()}
    else:
        src_b = cfg.source_config("source_b", seed).replace(seed=(seed + 1) % 2**64)
        stream = simulate_hom_experiment(src_a, src_b, beamsplitter_seed=seed ^ 0x5EED, workers=cfg.threads,
                                         common_clock=args.common_clock,
                                         indistinguishability=args.indistinguishability)
        sources = {"source": src_a.to_dict(), "source_b": src_b.to_dict()}
    out = args.out or os.path.join(cfg.output_dir, f"{args.experiment}.bpl")
    nbytes = write_stream(stream, out)
    meta = {
        "command": "simulate",
        "experiment": args.experiment,
        "file": os.path.basename(out),
        "bytes": nbytes,
        "records": len(stream),
        "duration_ps": stream.duration_ps,
        "channel_map": dict(stream.channel_map),
        "counts_per_channel": {str(c): int((stream.channels == c).sum()) for c in stream.channel_ids()},
        "resolved_sources": sources,
        "config": cfg.to_dict(),
    }
    with open(out + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    _emit(meta)
    return EXIT_OK


# ---------------------------------------------------------------- analysis

def _load_stream(path: str):
    sidecar = {}
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            sidecar = json.load(fh)
    if path.endswith(".csv"):
        stream = read_csv(path)
    else:
        stream = read_stream(path)
    if sidecar.get("duration_ps"):
        stream.duration_ps = int(sidecar["duration_ps"])
    stream.channel_map = sidecar.get("channel_map", {})
    return stream, sidecar


def _duration_ps(args, stream):
    if getattr(args, "duration", None):
        return int(round(args.duration * 1e12))
    return stream.duration


def _window(args, cfg: RunConfig) -> correlate.HeraldWindow:
    width = args.window_ns if args.window_ns is not None else cfg.analysis.window_ns
    offset = args.offset_ns if args.offset_ns is not None else cfg.analysis.window_offset_ns
    if width <= 0:
        raise UsageError("window must be positive")
    return correlate.HeraldWindow(int(round(offset * 1e3)), int(round(width * 1e3)))


def _ch(value, cmap, name, default):
    if value is not None:
        return value
    return int(cmap.get(name, default))


def cmd_g2(args) -> int:
    cfg = _run_config(args)
    stream, side = _load_stream(args.file)
    a = cfg.analysis
    bin_ps = args.bin_ps or a.bin_ps
    tau_min = args.tau_min_ps if args.tau_min_ps is not None else a.tau_min_ps
    tau_max = args.tau_max_ps if args.tau_max_ps is not None else a.tau_max_ps
    idler = _ch(args.idler, stream.channel_map, "idler", CHANNELS.idler)
    signal = _ch(args.signal, stream.channel_map, "signal", CHANNELS.signal)
    try:
        hist = correlate.g2_cross(stream, idler, signal, bin_ps, (tau_min, tau_max),
                                  duration=_duration_ps(args, stream), workers=cfg.threads)
    except ValueError as exc:
        if isinstance(exc, correlate.AnalysisUndefinedError):
            raise
        raise UsageError(str(exc)) from exc
    if args.csv:
        _write_text(args.csv, hist.to_csv())
    g2 = hist.g2
    far = np.abs(hist.centers) > 5_000
    stats = herald = None
    try:
        stats = correlate.herald_stats(stream, idler, signal, _window(args, cfg), _duration_ps(args, stream))
    except correlate.AnalysisUndefinedError:
        pass
    if stats is not None:
        herald = {"detected_pair_rate_hz": stats.pair_rate, "heralding_efficiency": stats.efficiency}
    _emit({
        "command": "g2",
        "file": os.path.basename(args.file),
        "channels": {"idler": idler, "signal": signal},
        **hist.summary(),
        "baseline_mean": float(g2[far].mean()) if far.any() else None,
        "g2_max_sigma": correlate.g2_peak_sigma(hist),
        "rates": herald,
        "config": cfg.to_dict(),
        "source_metadata": side.get("resolved_sources"),
    }, args.json)
    return EXIT_OK


def cmd_herald(args) -> int:
    cfg = _run_config(args)
    stream, side = _load_stream(args.file)
    idler = _ch(args.idler, stream.channel_map, "idler", CHANNELS.idler)
    signal = _ch(args.signal, stream.channel_map, "signal", CHANNELS.signal)
    win = _window(args, cfg)
    st = correlate.herald_stats(stream, idler, signal, win, _duration_ps(args, stream))
    eta = correlate.heralding_efficiency(stream, idler, signal, win, _duration_ps(args, stream))
    _emit({
        "command": "herald",
        "file": os.path.basename(args.file),
        "channels": {"idler": idler, "signal": signal},
        "window": asdict(win),
        "heralding_efficiency": eta,
        "n_idler": st.n_idler,
        "n_signal": st.n_signal,
        "n_heralded": st.n_heralded,
        "accidentals": st.accidentals,
        "detected_pair_rate_hz": st.pair_rate,
        "config": cfg.to_dict(),
        "source_metadata": side.get("resolved_sources"),
    }, args.json)
    return EXIT_OK


def cmd_autocorr(args) -> int:
    cfg = _run_config(args)
    stream, side = _load_stream(args.file)
    idler = _ch(args.idler, stream.channel_map, "idler", CHANNELS.idler)
    t_ch = _ch(args.t, stream.channel_map, "signal_t", CHANNELS.split_t)
    r_ch = _ch(args.r, stream.channel_map, "signal_r", CHANNELS.split_r)
    win = _window(args, cfg)
    st = correlate.autocorr_stats(stream, idler, t_ch, r_ch, win)
    _emit({
        "command": "autocorr",
        "file": os.path.basename(args.file),
        "channels": {"idler": idler, "t": t_ch, "r": r_ch},
        "window": asdict(win),
        "g2c": st.g2c,
        "n_idler": st.n_idler,
        "n_it": st.n_it,
        "n_ir": st.n_ir,
        "n_itr": st.n_itr,
        "config": cfg.to_dict(),
        "source_metadata": side.get("resolved_sources"),
    }, args.json)
    return EXIT_OK


def cmd_hom(args) -> int:
    cfg = _run_config(args)
    stream, side = _load_stream(args.file)
    cm = stream.channel_map
    ia = _ch(args.idler_a, cm, "idler_a", CHANNELS.idler)
    ib = _ch(args.idler_b, cm, "idler_b", CHANNELS.idler_b)
    o1 = _ch(args.out1, cm, "bs_out1", CHANNELS.split_t)
    o2 = _ch(args.out2, cm, "bs_out2", CHANNELS.split_r)
    a = cfg.analysis
    bin_ps = args.bin_ps or a.hom_bin_ps
    max_delay = args.max_delay_ns if args.max_delay_ns is not None else a.hom_max_delay_ns
    baseline = args.baseline_ns if args.baseline_ns is not None else a.baseline_ns
    try:
        prof = correlate.hom_profile(stream, ia, ib, o1, o2, _window(args, cfg), bin_ps,
                                     int(round(max_delay * 1e3)), int(round(baseline * 1e3)), cfg.threads)
    except ValueError as exc:
        if isinstance(exc, correlate.AnalysisUndefinedError):
            raise
        raise UsageError(str(exc)) from exc
    if args.csv:
        _write_text(args.csv, prof.to_csv())
    _emit({
        "command": "hom",
        "file": os.path.basename(args.file),
        "channels": {"idler_a": ia, "idler_b": ib, "out1": o1, "out2": o2},
        **prof.summary(),
        "config": cfg.to_dict(),
        "source_metadata": side.get("resolved_sources"),
    }, args.json)
    return EXIT_OK


def cmd_analyze(args) -> int:
    return {"g2": cmd_g2, "herald": cmd_herald, "autocorr": cmd_autocorr, "hom": cmd_hom}[args.what](args)


# ---------------------------------------------------------------- selftest

def cmd_selftest(args) -> int:
    from .sim import SourceConfig
    from .temporal import TemporalMode, energy_fraction

    checks = []
    geom = phasematch.OpticalGeometry(signal_angle=math.radians(1.4))

    def factor(dp):
        g = geom.with_(pump_detuning=phasematch.ghz(dp))
        return phasematch.phase_match_factor(phasematch.delta_k_exact(g), g.cell_length)

    r11 = factor(-1.1) / factor(1.0)
    r14 = factor(-1.1) / factor(1.1)
    checks.append(("phase-matching ratio -1.1/+1.0 GHz", abs(r11 - 1.11) <= 0.02, r11))
    checks.append(("phase-matching ratio -1.1/+1.1 GHz", abs(r14 - 1.14) <= 0.02, r14))
    opt = phasematch.optimize_geometry(geom.with_(pump_detuning=phasematch.ghz(-1.1)))
    checks.append(("perfect phase matching at negative detuning", opt.factor > 1 - 1e-9, opt.factor))
    ef = energy_fraction(TemporalMode(), 3.5e-9)
    checks.append(("energy in 3.5 ns window >= 0.95", ef >= 0.95, ef))
    s = simulate_pairs(SourceConfig(pair_rate=2e5, duration=0.05, seed=1))
    eta = correlate.heralding_efficiency(s, 0, 1)
    checks.append(("lossless heralding efficiency >= 0.99", eta >= 0.99, eta))
    ok = all(c[1] for c in checks)
    _emit({"command": "selftest", "passed": ok,
           "checks": [{"name": n, "passed": bool(p), "value": v} for n, p, v in checks]})
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------- parser

def _add_window(p):
    p.add_argument("--window-ns", type=float, help="herald window width (default 3.5)")
    p.add_argument("--offset-ns", type=float, help="herald window start relative to the idler (default 0)")


def _add_common(p):
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--threads", type=int, help="worker count (results do not depend on it)")
    p.add_argument("--json", help="also write the JSON result here")


def _add_g2_flags(p):
    p.add_argument("--idler", type=int)
    p.add_argument("--signal", type=int)
    p.add_argument("--bin-ps", type=int)
    p.add_argument("--tau-min-ps", type=int)
    p.add_argument("--tau-max-ps", type=int)
    p.add_argument("--duration", type=float, help="acquisition time [s] (default: sidecar or tag span)")
    p.add_argument("--csv", help="per-bin table tau_ps,counts,g2 ('-' for stdout)")


def _add_autocorr_flags(p):
    p.add_argument("--t", type=int, help="transmitted-port channel")
    p.add_argument("--r", type=int, help="reflected-port channel")


def _add_hom_flags(p):
    p.add_argument("--idler-a", type=int)
    p.add_argument("--idler-b", type=int)
    p.add_argument("--out1", type=int)
    p.add_argument("--out2", type=int)
    p.add_argument("--max-delay-ns", type=float)
    p.add_argument("--baseline-ns", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biphoton", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phasematch", help="phase-matching scan, ratios and optimum")
    _add_common(p)
    p.add_argument("--detuning", help="comma list of pump detunings [GHz]")
    p.add_argument("--theta", help="signal angles [deg]: start:stop:step or comma list")
    p.add_argument("--collection-angle", type=float, help="angle for the ratio report [deg] (default 1.4)")
    p.add_argument("--find-optimum", action="store_true")
    p.add_argument("--small-angle", action="store_true", help="use the quadratic approximation")
    p.add_argument("--lambda-sp-nm", type=float)
    p.add_argument("--lambda-pd-nm", type=float)
    p.add_argument("--cell-length-mm", type=float)
    p.add_argument("--csv", help="write theta_deg,detuning_ghz,factor here ('-' for stdout)")
    p.set_defaults(func=cmd_phasematch)

    p = sub.add_parser("simulate", help="Monte Carlo time-tag generation")
    _add_common(p)
    p.add_argument("--experiment", choices=("pairs", "hom", "autocorr"), default="pairs")
    p.add_argument("--preset", choices=sorted(presets.PRESETS))
    p.add_argument("--preset-b", choices=sorted(presets.PRESETS), help="second source (hom)")
    p.add_argument("--pair-rate", type=float, help="generated pairs per second")
    p.add_argument("--detected-rate-kcps", type=float)
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--jitter-ps", type=float, help="detector jitter FWHM")
    p.add_argument("--dead-time-ns", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--common-clock", action="store_true", help="hom: both sources share creation times")
    p.add_argument("--indistinguishability", type=float, default=1.0)
    p.add_argument("-o", "--out", help="output .bpl path (JSON sidecar written next to it)")
    p.set_defaults(func=cmd_simulate)

    for name, fn, adders in (("g2", cmd_g2, (_add_g2_flags, _add_window)),
                             ("herald", cmd_herald, (_add_window,)),
                             ("autocorr", cmd_autocorr, (_add_autocorr_flags, _add_window)),
                             ("hom", cmd_hom, (_add_hom_flags, _add_window))):
        p = sub.add_parser(name, help=f"{name} analysis of a tag file")
        _add_common(p)
        p.add_argument("file")
        if name != "g2":
            p.add_argument("--idler", type=int)
            p.add_argument("--signal", type=int)
            p.add_argument("--duration", type=float)
        if name == "hom":
            p.add_argument("--bin-ps", type=int)
            p.add_argument("--csv")
        for add in adders:
            add(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("analyze", help="any analysis, chosen by flag")
    _add_common(p)
    p.add_argument("file")
    which = p.add_mutually_exclusive_group(required=True)
    for w in ("g2", "herald", "autocorr", "hom"):
        which.add_argument(f"--{w}", dest="what", action="store_const", const=w)
    _add_g2_flags(p)
    _add_autocorr_flags(p)
    _add_hom_flags(p)
    _add_window(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selftest", help="quick built-in consistency checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def _glue_negative_values(argv):
    # argparse takes "-1.1,+1.0" for an option; bind it to its flag instead
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--detuning", "--theta"):
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_values(argv))
    try:
        return args.func(args)
    except (UsageError, ResourceLimitError) as exc:
        print(f"biphoton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StreamFormatError, ConfigParseError, FileNotFoundError) as exc:
        print(f"biphoton: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except correlate.AnalysisUndefinedError as exc:
        print(f"biphoton: analysis undefined: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except ConfigError as exc:
        print(f"biphoton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
