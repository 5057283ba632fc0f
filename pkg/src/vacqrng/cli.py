"""Command-line pipeline: simulate -> characterize -> entropy -> extract.

Exit codes: 0 success, 2 configuration error, 3 shot-noise check failed,
4 degenerate vacuum PSD, 5 entropy-budget refusal.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import characterize as ch
from . import simulate as sim
from . import theory
from .entropy import (
    AdcGeometry,
    EntropyReport,
    EpsilonBudget,
    ModelParams,
    build_report,
    min_entropy_adc,
)
from .extractor import (
    BudgetError,
    ExtractorConfig,
    ToeplitzSeed,
    extract_blocks,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SHOT_NOISE = 3
EXIT_DEGENERATE = 4
EXIT_BUDGET = 5

# Every allowed configuration key; unknown sections or keys are rejected.
_SCHEMA = {
    "noise": {"kind", "variance", "mixture_means", "mixture_sigmas",
              "mixture_weights", "replay_path"},
    "detector": {"kind", "taps", "highpass_cutoff_bins"},
    "adc": {"bits", "gain", "error_table"},
    "characterization": {"segment_len", "overlap", "window", "zero_below_bin",
                         "floor_factor", "bootstrap_resamples", "wavelength_nm",
                         "eta_override", "g_chi0_override", "b_adc_override",
                         "eta_systematic", "shot_threshold"},
    "epsilon": {"eps_param", "eps_adc", "eps_hash"},
    "extractor": {"k", "l", "stripe_width"},
}

_DEFAULTS = {
    "noise": {"kind": "gaussian", "variance": "1.0"},
    "detector": {"kind": "ar", "taps": "1.0", "highpass_cutoff_bins": "0"},
    "adc": {"bits": "16", "gain": "1200.0", "error_table": ""},
    "characterization": {"segment_len": "4096", "overlap": "0.5",
                         "window": "hann", "zero_below_bin": "0",
                         "floor_factor": "1e-6", "bootstrap_resamples": "1000",
                         "wavelength_nm": "850", "eta_override": "",
                         "g_chi0_override": "", "b_adc_override": "0.0",
                         "eta_systematic": "0.05", "shot_threshold": "0.05"},
    "epsilon": {"eps_param": "1e-10", "eps_adc": "6e-5", "eps_hash": "1e-17"},
    "extractor": {"k": "1680", "l": "7872", "stripe_width": "64"},
}


class CliConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    """Parse the INI config, reject unknown keys, fill defaults."""
    resolved = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    if path is None:
        return resolved
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise CliConfigError(f"config file not found: {path}")
    for sec in parser.sections():
        if sec not in _SCHEMA:
            raise CliConfigError(f"unknown config section [{sec}]")
        for key, val in parser.items(sec):
            if key not in _SCHEMA[sec]:
                raise CliConfigError(f"unknown key {key!r} in section [{sec}]")
            resolved[sec][key] = val
    return resolved


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def build_noise(cfg: dict) -> sim.NoiseSpec:
    sec = cfg["noise"]
    params = {}
    if sec["kind"] == "mixture":
        params = {"means": _floats(sec.get("mixture_means", "")),
                  "sigmas": _floats(sec.get("mixture_sigmas", "")),
                  "weights": _floats(sec.get("mixture_weights", ""))}
    elif sec["kind"] == "file-replay":
        params = {"path": sec.get("replay_path", "")}
    return sim.NoiseSpec(kind=sec["kind"], variance=float(sec["variance"]),
                         params=params)


def build_response(cfg: dict) -> sim.DetectorResponse:
    sec = cfg["detector"]
    return sim.DetectorResponse(
        kind=sec["kind"],
        taps=tuple(_floats(sec["taps"])),
        highpass_cutoff_bins=int(sec["highpass_cutoff_bins"]),
    )


def build_adc(cfg: dict) -> sim.AdcModel:
    sec = cfg["adc"]
    geometry = AdcGeometry.from_bits(int(sec["bits"]))
    error_model = None
    if sec.get("error_table"):
        error_model = ch.DigitizationErrorModel.from_csv(
            sec["error_table"], geometry.bins_d
        )
    return sim.AdcModel(geometry=geometry, gain_g=float(sec["gain"]),
                        error_model=error_model)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    noise = build_noise(cfg)
    response = build_response(cfg)
    adc = build_adc(cfg)
    block = sim.generate_stream(
        noise, response, args.eta, adc, args.n, args.seed,
        include_vacuum=not args.dark,
    )
    sim.write_block(block, args.out)
    print(f"wrote {args.out}: {len(block.codes)} retained / {block.n_total} total "
          f"samples, {block.n_out_of_range} out of range")
    return EXIT_OK


def cmd_characterize(args) -> int:
    cfg = load_config(args.config)
    sec = cfg["characterization"]
    eps = EpsilonBudget(eps_param=float(args.eps_param or cfg["epsilon"]["eps_param"]),
                        eps_adc=float(cfg["epsilon"]["eps_adc"]),
                        eps_hash=float(args.eps_hash or cfg["epsilon"]["eps_hash"]))
    # eps_param split equally across the eta, gain and P sub-estimates
    eps_sub = eps.eps_param / 3.0
    details: dict = {"eps_split": {"eta": eps_sub, "gain": eps_sub, "P": eps_sub}}

    vac_block = sim.read_block(args.vacuum)
    elec_block = sim.read_block(args.electronic)
    m = int(sec["segment_len"])
    overlap = float(sec["overlap"])
    window = sec["window"]
    zb = int(sec["zero_below_bin"])
    floor_factor = float(sec["floor_factor"])

    segs_total = ch.welch_segments(vac_block, m, overlap, window)
    psd_total = ch.SpectralDensity(segs_total.mean(axis=0), n_segments=len(segs_total))
    psd_elec = ch.psd_welch(elec_block, m, overlap, window)
    psd_vac = ch.vacuum_psd(psd_total, psd_elec, zero_below_bin=zb,
                            floor_factor=floor_factor)

    # quantum efficiency: from calibration currents, unless overridden
    if sec["eta_override"]:
        eta = float(sec["eta_override"])
        details["eta_source"] = "override"
    elif args.calibration:
        records = ch.read_calibration_csv(args.calibration)
        if records and records[0].variance is not None:
            fit = ch.shot_noise_linearity(records,
                                          threshold=float(sec["shot_threshold"]))
            details["shot_noise"] = dataclasses.asdict(fit)
            if not fit.is_shot_limited:
                print("error: calibration source is not shot-noise limited",
                      file=sys.stderr)
                return EXIT_SHOT_NOISE
            raise CliConfigError(
                "variance calibration verifies shot-noise limiting only; "
                "provide eta_override or a (power, current) calibration"
            )
        k_resp, sigma_k = ch.responsivity_fit(records)
        wavelength = float(sec["wavelength_nm"]) * 1e-9
        eta_hat = ch.quantum_efficiency(k_resp, wavelength)
        sigma_eta = ch.quantum_efficiency(k_resp + sigma_k, wavelength) - eta_hat
        eta = ch.eta_upper_bound(eta_hat, sigma_eta,
                                 systematic_frac=float(sec["eta_systematic"]),
                                 eps=eps_sub)
        details["eta_source"] = {"responsivity_A_per_W": k_resp,
                                 "sigma": sigma_k, "eta_hat": eta_hat}
    else:
        raise CliConfigError("need --calibration or eta_override")

    if sec["g_chi0_override"]:
        g_chi0 = float(sec["g_chi0_override"])
        details["g_chi0_source"] = "override"
    else:
        boot = ch.bootstrap_gain_bandwidth(
            segs_total, eta, psd_electronic=psd_elec, zero_below_bin=zb,
            floor_factor=floor_factor,
            n_resamples=int(sec["bootstrap_resamples"]), seed=args.seed,
        )
        g_chi0 = boot.lower  # certification uses the conservative endpoint
        details["g_chi0_source"] = dataclasses.asdict(boot)

    log2_P = ch.in_range_bound(vac_block.n_total,
                               vac_block.n_total - vac_block.n_out_of_range,
                               eps_sub)
    if not math.isfinite(log2_P):
        print("error: in-range bound is degenerate", file=sys.stderr)
        return EXIT_DEGENERATE

    if cfg["adc"]["error_table"]:
        model = ch.DigitizationErrorModel.from_csv(
            cfg["adc"]["error_table"], 1 << int(cfg["adc"]["bits"])
        )
        b_adc = model.penalty_bits()
    else:
        b_adc = float(sec["b_adc_override"])

    adc = AdcGeometry.from_bits(int(cfg["adc"]["bits"]))
    params = ModelParams(eta=eta, g_chi0=g_chi0, adc=adc,
                         log2_P=log2_P, b_adc=b_adc)
    report = build_report(params, eps, l_bits=int(cfg["extractor"]["l"]),
                          bits_per_sample=16)
    outdir = Path(args.outdir or Path(args.out).parent)
    outdir.mkdir(parents=True, exist_ok=True)
    ch.write_psd_csv(outdir / "psd_total.csv", psd_total)
    ch.write_psd_csv(outdir / "psd_electronic.csv", psd_elec)
    ch.write_psd_csv(outdir / "psd_vacuum.csv", psd_vac)
    from .plots import plot_psds

    plot_psds(outdir / "psd.png",
              {"total": psd_total, "electronic": psd_elec, "vacuum": psd_vac})
    doc = {**dataclasses.asdict(report), "details": details,
           "resolved_config": cfg}
    Path(args.out).write_text(json.dumps(doc, indent=2))
    print(f"wrote {args.out}: hmin_final = {report.hmin_final:.4f} bits/sample, "
          f"k = {report.k}")
    return EXIT_OK


def cmd_entropy(args) -> int:
    cfg = load_config(args.config)
    eps = EpsilonBudget(
        eps_param=float(args.eps_param or cfg["epsilon"]["eps_param"]),
        eps_adc=float(cfg["epsilon"]["eps_adc"]),
        eps_hash=float(args.eps_hash or cfg["epsilon"]["eps_hash"]),
    )
    adc = AdcGeometry.from_bits(args.bits)
    if args.log2_p is not None:
        log2_P = args.log2_p
    elif args.n_total is not None and args.n_in_range is not None:
        log2_P = ch.in_range_bound(args.n_total, args.n_in_range,
                                   eps.eps_param / 3.0)
    else:
        log2_P = 0.0
    params = ModelParams(eta=args.eta, g_chi0=args.g_chi0, adc=adc,
                         log2_P=log2_P, b_adc=args.b_adc)
    report = build_report(params, eps, l_bits=args.l,
                          bits_per_sample=args.bits_per_sample)
    doc = {**dataclasses.asdict(report), "resolved_config": cfg}
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    print(f"hmin_adc = {report.hmin_adc:.4f}  hmin_final = {report.hmin_final:.4f}  "
          f"k_max = {report.k}", file=sys.stderr)
    return EXIT_OK


def cmd_theory_curves(args) -> int:
    out = Path(args.out)
    if args.mode == "fig2a":
        grid = np.linspace(args.eta_min, args.eta_max, args.points)
        curves = theory.entropy_vs_efficiency(grid, excess_db=args.excess_db)
        columns = {f"{bits}bit": vals for bits, vals in curves.items()}
        theory.write_curves_csv(out, "eta", grid, columns)
        x, xlabel = grid, "quantum efficiency"
    else:
        grid = np.linspace(args.excess_min_db, args.excess_max_db, args.points)
        vals = theory.entropy_vs_excess_noise(grid, eta=args.eta,
                                              adc_bits=args.bits)
        columns = {f"eta={args.eta}": vals}
        theory.write_curves_csv(out, "excess_db", grid, columns)
        x, xlabel = grid, "detected noise relative to vacuum [dB]"
    if args.png:
        from .plots import plot_curves

        plot_curves(out.with_suffix(".png"), x, columns, xlabel)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = load_config(args.config)
    doc = json.loads(Path(args.report).read_text())
    fields = {f.name for f in dataclasses.fields(EntropyReport)}
    report = EntropyReport(**{k: v for k, v in doc.items() if k in fields})
    k = args.k or int(cfg["extractor"]["k"])
    l = args.l or int(cfg["extractor"]["l"])
    config = ExtractorConfig(k=k, l=l,
                             eps_hash=float(args.eps_hash or report.eps_hash),
                             column_stripe_width=int(cfg["extractor"]["stripe_width"]))
    seed_path = Path(args.seed_file)
    if not seed_path.exists():
        raise CliConfigError(f"seed file not found: {seed_path}")
    seed = ToeplitzSeed.from_file(seed_path, k, l)
    block = sim.read_block(args.infile)
    n_bits_out = 0
    with open(args.out, "wb") as fh:
        for out in extract_blocks(config, report, seed, [block.codes]):
            fh.write(out.data)
            n_bits_out += out.n_bits
    ratio = k / l
    print(f"extracted {n_bits_out} bits; rate ratio k/l = {ratio:.6f} "
          f"({ratio * args.input_rate_gbps:.3f} Gb/s at "
          f"{args.input_rate_gbps:g} Gb/s input)")
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Quick internal consistency checks (not the acceptance suite)."""
    from .entropy import min_entropy_ideal

    checks = []
    checks.append(("ideal bound closed form",
                   abs(min_entropy_ideal(0.75, 1.0) - math.log2(math.pi)) < 1e-12))
    params = ModelParams(eta=0.81, g_chi0=2581.0,
                         adc=AdcGeometry.from_bits(16))
    checks.append(("reference perfect-ADC bound",
                   abs(min_entropy_adc(params).bits - 11.4665) < 0.01))
    seed = ToeplitzSeed(bits=np.array([1, 0, 1, 1]), k=2, l=3)
    from .extractor import toeplitz_hash_naive

    checks.append(("Toeplitz pinned vector",
                   toeplitz_hash_naive(seed, np.array([1, 1, 0])).tolist() == [1, 0]))
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok &= passed
    return EXIT_OK if ok else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vacqrng",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic sample block")
    p.add_argument("--config", default=None)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.81)
    p.add_argument("--dark", action="store_true",
                   help="electronic-noise-only capture (vacuum path off)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("characterize", help="estimate model parameters from blocks")
    p.add_argument("--config", default=None)
    p.add_argument("--vacuum", required=True, help="shot-noise-limited capture")
    p.add_argument("--electronic", required=True, help="dark capture")
    p.add_argument("--calibration", default=None, help="calibration CSV")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--eps-param", dest="eps_param", default=None)
    p.add_argument("--eps-hash", dest="eps_hash", default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("entropy", help="entropy budget from explicit parameters")
    p.add_argument("--config", default=None)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--g-chi0", dest="g_chi0", type=float, required=True)
    p.add_argument("--bits", type=int, default=16)
    p.add_argument("--log2-p", dest="log2_p", type=float, default=None)
    p.add_argument("--n-total", dest="n_total", type=int, default=None)
    p.add_argument("--n-in-range", dest="n_in_range", type=int, default=None)
    p.add_argument("--b-adc", dest="b_adc", type=float, default=0.0)
    p.add_argument("--l", type=int, default=7872)
    p.add_argument("--bits-per-sample", dest="bits_per_sample", type=int, default=16)
    p.add_argument("--eps-param", dest="eps_param", default=None)
    p.add_argument("--eps-hash", dest="eps_hash", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("theory-curves", help="emit entropy theory curves as CSV")
    p.add_argument("--mode", choices=("fig2a", "fig2b"), required=True)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--eta-min", dest="eta_min", type=float, default=0.05)
    p.add_argument("--eta-max", dest="eta_max", type=float, default=0.99)
    p.add_argument("--excess-db", dest="excess_db", type=float, default=5.0)
    p.add_argument("--excess-min-db", dest="excess_min_db", type=float, default=0.0)
    p.add_argument("--excess-max-db", dest="excess_max_db", type=float, default=20.0)
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--bits", type=int, default=16)
    p.add_argument("--png", action="store_true", help="render a figure next to the CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_theory_curves)

    p = sub.add_parser("extract", help="hash a sample block into random bytes")
    p.add_argument("--config", default=None)
    p.add_argument("--report", required=True, help="entropy report JSON")
    p.add_argument("--seed-file", dest="seed_file", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--eps-hash", dest="eps_hash", default=None)
    p.add_argument("--input-rate-gbps", dest="input_rate_gbps", type=float,
                   default=16.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("selftest", help="run quick internal checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliConfigError, sim.ConfigError, ValueError) as exc:
        if isinstance(exc, ch.DegeneratePsdError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DEGENERATE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
