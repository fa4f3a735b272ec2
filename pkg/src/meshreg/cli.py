"""``meshreg`` command line: register, synth, dt, eval.

Exit codes: 0 success, 1 bad arguments or config, 2 I/O failure,
3 registration failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import __version__
from . import io as mio
from .dtransform import EdgeMap, EmptyContourError, compute_distance_transform
from .metrics import mutual_distance_stats
from .optimizer import RegistrationConfig, RegistrationError, register, registered_edges
from .synth import MODES, SHAPES, field_csv_text, make_pair

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_REGISTRATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    command: str
    inputs: dict
    config_path: str | None
    out_dir: str
    seed: int | None
    version: str = __version__

    def to_json(self) -> dict:
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meshreg", description="Nonrigid contour registration with a meshless deformation model.")
    p.add_argument("--version", action="version", version=f"meshreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("register", help="register a source contour image onto a target")
    r.add_argument("--source", required=True)
    r.add_argument("--target", required=True)
    r.add_argument("--config", help="TOML or JSON file with RegistrationConfig fields")
    r.add_argument("--out", required=True)
    r.add_argument("--levels", type=int)
    r.add_argument("--lambda", dest="lam", type=float)
    r.add_argument("--placement", choices=("regular", "adaptive"))
    r.add_argument("--basis-order", type=int)

    s = sub.add_parser("synth", help="write a seeded synthetic contour pair")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shape", choices=SHAPES, default="ellipse")
    s.add_argument("--peak", type=float, default=10.0)
    s.add_argument("--mode", choices=MODES, default="bend")
    s.add_argument("--size", type=int, default=150)

    d = sub.add_parser("dt", help="distance transform of an edge image")
    d.add_argument("--source", required=True)
    d.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="mutual contour distance between two edge images")
    e.add_argument("a")
    e.add_argument("b")
    return p


# ------------------------------------------------------------------ helpers

def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"cannot read input: {path}")
    return p


def _image(path: str):
    p = _existing(path)
    try:
        return mio.read_image(p)
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc


def load_config(path: str | None) -> RegistrationConfig:
    if path is None:
        return RegistrationConfig()
    p = _existing(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            doc = json.loads(raw)
        else:
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            doc = tomllib.loads(raw.decode("utf-8"))
        doc = doc.get("registration", doc)
        return RegistrationConfig.from_mapping(doc)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


def _write(out: Path, name: str, data) -> None:
    try:
        mio.atomic_write(out / name, data)
    except OSError as exc:
        raise InputError(f"cannot write {out / name}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_register(args) -> int:
    src = _image(args.source)
    tgt = _image(args.target)
    cfg = load_config(args.config)
    overrides = {
        "pyramid_levels": args.levels,
        "lam": args.lam,
        "placement": args.placement,
        "basis_order": args.basis_order,
    }
    try:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if src.shape != tgt.shape:
        raise UsageError(f"source {src.shape} and target {tgt.shape} differ in size")
    try:
        model, field, report = register(src, tgt, cfg)
    except EmptyContourError as exc:
        raise RegistrationError(str(exc)) from exc
    except ValueError as exc:  # e.g. too many pyramid levels for the image size
        raise UsageError(str(exc)) from exc

    out = Path(args.out)
    src_edges = mio.read_edge_map(args.source, cfg.edge_threshold)
    tgt_edges = mio.read_edge_map(args.target, cfg.edge_threshold)
    deformed = registered_edges(src, field, cfg)
    doc = report.to_json()
    doc["config"] = cfg.to_json()
    manifest = RunManifest(
        "register", {"source": args.source, "target": args.target}, args.config, str(out), None
    )
    _write(out, "model.json", model.dumps())
    _write(out, "field.csv", field.csv_text())
    _write(out, "report.json", mio.json_text(doc))
    _write(out, "overlay.svg", mio.overlay_svg(src_edges, tgt_edges, deformed))
    _write(out, "grid.svg", mio.grid_svg(field.ux, field.uy))
    _write(out, "manifest.json", mio.json_text(manifest.to_json()))
    final = report.final
    print(f"mean {final.mean:.4f} px, max {final.max:.4f} px, iterations {report.iterations}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.peak < 0:
        raise UsageError("--peak must be nonnegative")
    if args.size < 32:
        raise UsageError("--size must be at least 32")
    pair = make_pair(args.shape, seed=args.seed, peak=args.peak, mode=args.mode, size=args.size)
    out = Path(args.out)
    _write(out, "source.png", mio.png_bytes(pair.source))
    _write(out, "target.png", mio.png_bytes(pair.target))
    _write(out, "truth.csv", field_csv_text(pair.ux, pair.uy))
    _write(out, "truth.json", mio.json_text(pair.meta))
    manifest = RunManifest("synth", {}, None, str(out), args.seed)
    _write(out, "manifest.json", mio.json_text(manifest.to_json()))
    return EXIT_OK


def cmd_dt(args) -> int:
    edges = EdgeMap.from_image(_image(args.source))
    try:
        field = compute_distance_transform(edges)
    except EmptyContourError as exc:
        raise RegistrationError(str(exc)) from exc
    out = Path(args.out)
    _write(out, "dt.csv", mio.distance_csv_text(field))
    _write(out, "dt.png", mio.png_bytes(mio.colorize(field.dist)))
    return EXIT_OK


def cmd_eval(args) -> int:
    a = EdgeMap.from_image(_image(args.a))
    b = EdgeMap.from_image(_image(args.b))
    if a.shape != b.shape:
        raise UsageError(f"images differ in size: {a.shape} vs {b.shape}")
    try:
        stats = mutual_distance_stats(a, b)
    except ValueError as exc:
        raise RegistrationError(str(exc)) from exc
    print(json.dumps(stats.to_json(), sort_keys=True))
    return EXIT_OK


COMMANDS = {"register": cmd_register, "synth": cmd_synth, "dt": cmd_dt, "eval": cmd_eval}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version, or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_ARGS
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"meshreg: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except InputError as exc:
        print(f"meshreg: {exc}", file=sys.stderr)
        return EXIT_IO
    except RegistrationError as exc:
        print(f"meshreg: registration failed: {exc}", file=sys.stderr)
        return EXIT_REGISTRATION


if __name__ == "__main__":
    sys.exit(main())
