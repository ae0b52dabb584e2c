"""Command-line client for the localization service.

Every subcommand builds a request model and sends it to the service API.  By
default the service runs in-process (no server needed); with ``--server URL``
the same requests go to a remote instance, in which case all paths must be
visible to that machine.  ``doakit serve`` starts the HTTP service.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import httpx

from . import __version__
from .service.models import EvaluateRequest, LocalizeRequest, SynthRequest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doakit",
        description="Broadband acoustic DOA estimation (MCC-PHAT / wideband MUSIC)",
    )
    parser.add_argument("--version", action="version", version=f"doakit {__version__}")
    parser.add_argument(
        "--server",
        default=os.environ.get("DOAKIT_SERVER"),
        help="service base URL; default runs the service in-process",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="estimate a DOA trajectory from a recording")
    p.add_argument("--geometry", required=True, help="geometry JSON")
    p.add_argument("--input", required=True, help="multichannel WAV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--method", choices=["music", "mccphat", "both"], default="both")
    p.add_argument("--truth", help="ground-truth CSV for OSPA scoring")
    p.add_argument("--fmin", type=float, default=300.0, help="band low edge, Hz")
    p.add_argument("--fmax", type=float, default=4000.0, help="band high edge, Hz")
    p.add_argument("--frame", type=int, default=2048, help="STFT frame length")
    p.add_argument("--hop", type=int, default=1024, help="STFT hop, samples")
    p.add_argument("--window", choices=["hann", "rectangular"], default="hann")
    p.add_argument("--grid-az-step", type=float, default=1.0, help="degrees")
    p.add_argument("--grid-el-step", type=float, default=5.0, help="degrees")
    p.add_argument("--qhat", type=int, default=1, help="source count for MUSIC")
    p.add_argument("--block", type=int, default=8, help="covariance block, frames")
    p.add_argument("--gate-db", type=float, default=6.0, help="energy gate threshold")
    p.add_argument("--cutoff", type=float, default=20.0, help="OSPA cutoff, degrees")
    p.add_argument("--power", type=float, default=2.0, help="OSPA power")

    p = sub.add_parser("evaluate", help="score an estimated trajectory against truth")
    p.add_argument("--estimate", required=True, help="trajectory CSV")
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--cutoff", type=float, default=20.0)
    p.add_argument("--power", type=float, default=2.0)
    p.add_argument("--max-gap", type=float, default=0.1)

    p = sub.add_parser("synth", help="render a synthetic scene fixture")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stem", default="scene", help="output file stem")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _resolve(path: str | None, remote: bool) -> str | None:
    """Make local paths absolute; remote paths pass through untouched."""
    if path is None or remote:
        return path
    return str(Path(path).resolve())


def _post(server: str | None, endpoint: str, payload: dict) -> dict:
    """Send one request, either to a remote service or in-process via ASGI."""
    if server:
        with httpx.Client(base_url=server, timeout=3600.0) as client:
            response = client.post(endpoint, json=payload)
    else:
        import asyncio

        from .service.app import create_app

        async def call() -> httpx.Response:
            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://doakit", timeout=None
            ) as client:
                return await client.post(endpoint, json=payload)

        response = asyncio.run(call())
    if response.status_code != 200:
        try:
            detail = response.json()["detail"]
            stage = detail.get("stage", "service")
            message = detail.get("message", response.text)
        except Exception:
            stage, message = "service", response.text
        raise SystemExit(f"doakit error [{stage}]: {message}")
    return response.json()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    remote = bool(args.server)
    if args.command == "localize":
        request = LocalizeRequest(
            geometry=_resolve(args.geometry, remote),
            input=_resolve(args.input, remote),
            out=_resolve(args.out, remote),
            method=args.method,
            truth=_resolve(args.truth, remote),
            fmin=args.fmin,
            fmax=args.fmax,
            frame=args.frame,
            hop=args.hop,
            window=args.window,
            grid_az_step=args.grid_az_step,
            grid_el_step=args.grid_el_step,
            qhat=args.qhat,
            block=args.block,
            gate_db=args.gate_db,
            cutoff=args.cutoff,
            power=args.power,
        )
        data = _post(args.server, "/localize", request.model_dump())
        print(
            f"frames: {data['frames_kept']} kept / {data['frames_total']} total "
            f"({data['frames_dropped']} gated) at {data['sample_rate']:.0f} Hz, "
            f"{data['channels']} channels"
        )
        for name, method in data["methods"].items():
            line = f"{name}: {method['wall_seconds']:.3f} s"
            if method.get("ospa"):
                ospa = method["ospa"]
                line += (
                    f", azimuth RMSE {ospa['rmse_azimuth']:.2f} deg, "
                    f"elevation RMSE {ospa['rmse_elevation']:.2f} deg "
                    f"({ospa['frames_scored']} frames scored)"
                )
            print(line)
            for kind, path in method.get("files", {}).items():
                print(f"  {kind}: {path}")
    elif args.command == "evaluate":
        request = EvaluateRequest(
            estimate=_resolve(args.estimate, remote),
            truth=_resolve(args.truth, remote),
            cutoff=args.cutoff,
            power=args.power,
            max_gap=args.max_gap,
        )
        data = _post(args.server, "/evaluate", request.model_dump())
        print(
            f"azimuth RMSE {data['rmse_azimuth']:.4f} deg, "
            f"elevation RMSE {data['rmse_elevation']:.4f} deg "
            f"({data['frames_scored']} frames, "
            f"{data['dropped_estimates']} dropped)"
        )
    elif args.command == "synth":
        request = SynthRequest(
            spec=_resolve(args.spec, remote),
            out=_resolve(args.out, remote),
            stem=args.stem,
        )
        data = _post(args.server, "/synth", request.model_dump())
        print(
            f"scene: {data['channels']} channels, {data['duration']:.2f} s "
            f"at {data['sample_rate']:.0f} Hz"
        )
        for kind in ("wav", "truth", "geometry"):
            print(f"  {kind}: {data[kind]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
