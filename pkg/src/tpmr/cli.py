"""`tpmr` command-line entry point.

Exit status: 0 success, 1 usage, 2 configuration, 3 numerical or validation
failure, 4 I/O.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import NoReturn, Sequence

from .types import OutputFormat, RunReport, SweepAxis
from .errors import ErrorCode, TpmrError, exit_code_for
from .config import RunConfig, config_for_command, with_cli_overrides
from .controller import TpmrController

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s [%(name)s] %(message)s"
USAGE_EXIT = exit_code_for(ErrorCode.USAGE_ERROR)

COMMAND_HELP = {
    "levels": "energy levels, ESR, NMR and TPMR line positions",
    "synth": "one synthetic ODMR spectrum",
    "sweep": "spectra and fits over pump power or pump frequency",
    "oracle": "ODMR spectrum from the time-domain spin simulation",
    "fit": "fit 3 or 9 Gaussian dips to a spectrum file",
    "tpmr-curve": "sideband intensity against rf frequency",
    "spurs": "diplexer spur lines and their effect on a spectrum",
    "validate": "simulation-versus-theory checks",
    "fig3": "pump-power series preset",
    "fig4": "pump-frequency series preset with linewidth analysis",
    "fig5-spurs": "diplexer characterisation preset",
    "fig6": "sideband intensity curve preset",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="flat 'section.key = value' config file")
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=None,
                        help="output file format")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = _Parser(
        prog="tpmr",
        description="Two-photon magnetic resonance toolkit for single NV centers."
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, text in COMMAND_HELP.items():
        sub = commands.add_parser(name, help=text, parents=[common])
        if name == "sweep":
            sub.add_argument("--axis", choices=[a.value for a in SweepAxis], default=None)
        elif name == "fit":
            sub.add_argument("spectrum", type=Path, help="spectrum file (.csv or .json)")
        elif name in ("spurs", "fig5-spurs"):
            sub.add_argument("--force-db", type=float, default=None,
                             help="replace every spur level by this value (dB)")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True
    )


def _apply_arguments(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    cfg = with_cli_overrides(
        cfg,
        seed=args.seed,
        out=args.out,
        jobs=args.jobs,
        fmt=OutputFormat(args.format) if args.format else None
    )
    if getattr(args, "axis", None):
        cfg = replace(cfg, sweep=replace(cfg.sweep, axis=SweepAxis(args.axis)))
    if getattr(args, "force_db", None) is not None:
        cfg = replace(cfg, spurs=replace(cfg.spurs, force_db=args.force_db))
    return cfg


def _print_report(report: RunReport) -> None:
    for line in report.summary:
        print(line)
    for path in report.files:
        print(f"wrote {path}")


def _fail(error: TpmrError) -> int:
    logger.error("%s", error)
    return exit_code_for(error.code)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else USAGE_EXIT
    configure_logging(args.verbose)

    loaded = config_for_command(args.command, args.config, os.environ)
    if loaded.is_err():
        return _fail(loaded.unwrap_err())
    cfg = _apply_arguments(loaded.unwrap(), args)

    controller = TpmrController(cfg, fit_input=getattr(args, "spectrum", None))
    result = controller.execute(args.command)
    if result.is_err():
        return _fail(result.unwrap_err())

    _print_report(result.unwrap())
    return 0


if __name__ == "__main__":
    sys.exit(main())
