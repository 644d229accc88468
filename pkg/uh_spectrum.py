#!/usr/bin/env python3
"""
Uniform-Hyperbolicity Spectrum Toolkit

Single entry point for classifying energies of 1D discrete Schrodinger
operators (H u)_n = u_{n+1} + u_{n-1} + v(n) u_n via their transfer-matrix
cocycles, and for building Green's functions in the resolvent set.

Commands:
- scan      classify an energy grid and report spectral bands
- certify   run the uniform-hyperbolicity test at one energy
- green     build and verify the Green's function at a certified energy
- witness   bounded-orbit and finitely supported (Weyl) witnesses at one energy
- eig       eigenvalues of a centered finite section
- compare   spectrum inclusion across hull samples plus finite-section agreement

Usage Examples:
    # Bands of the free Laplacian
    python uh_spectrum.py scan --model constant

    # Almost Mathieu operator from a stored config, finer grid
    python uh_spectrum.py scan --config almost_mathieu --step 0.005

    # Certificate and Green's function at E = 3
    python uh_spectrum.py certify --model constant --E 3
    python uh_spectrum.py green --model constant --E 3 --out output/green_free

    # List stored configs
    python uh_spectrum.py --list-configs

Exit codes: 0 success, 1 configuration or usage error, 2 numerical
refusal, 3 output I/O error.
"""

import os
import sys
import logging
import argparse
from pathlib import Path
from typing import List, Optional

# Add the repository root to path for the src package
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import ArtifactIOError, ConfigError, SpectralToolError
from src.models import FAMILIES
from src.run_config import COMMANDS, build_config, load_config_file, run

CONFIG_DIR = Path(__file__).parent / "configs"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1 like every other configuration error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def setup_environment(quiet: bool = False):
    """Load .env, configure logging and create the output directory"""
    if not quiet:
        print("🚀 UH-SPECTRUM - Uniform Hyperbolicity Toolkit")
        print("=" * 60)
    try:
        env_file = Path('.env')
        if env_file.exists():
            for line in env_file.read_text(encoding='utf-8').splitlines():
                line = line.strip()
                if line and not line.startswith('#') and '=' in line:
                    key, value = line.split('=', 1)
                    key = key.strip()
                    value = value.strip()
                    if key and value and key not in os.environ:
                        os.environ[key] = value
            if not quiet:
                print("✅ Loaded environment from .env")
    except OSError as _e:
        print(f"⚠️  Warning: Could not load .env: {_e}")

    level = os.getenv('LOG_LEVEL', 'WARNING').upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    Path("output").mkdir(parents=True, exist_ok=True)


def list_available_configs() -> List[str]:
    """List all stored configs in the configs/ directory"""
    if not CONFIG_DIR.exists():
        return []
    names = {p.stem for pattern in ("*.json", "*.yaml", "*.yml") for p in CONFIG_DIR.glob(pattern)}
    return sorted(names)


def resolve_config_path(name: str) -> Path:
    """A config argument is either a path or the name of a stored config."""
    path = Path(name)
    if path.exists():
        return path
    for suffix in (".json", ".yaml", ".yml"):
        candidate = CONFIG_DIR / f"{name}{suffix}"
        if candidate.exists():
            return candidate
    raise ConfigError(f"config: no file {name!r} and no stored config of that name "
                      f"(available: {', '.join(list_available_configs()) or 'none'})")


def display_system_info():
    """Display system information and capabilities"""
    print("\n📊 SYSTEM INFORMATION")
    print("-" * 40)
    print(f"📂 Config Directory: {CONFIG_DIR.name}/")
    print("📁 Output Directory: output/")
    print(f"⚙️  Commands: {', '.join(COMMANDS)}")
    print(f"🧮 Model families: {', '.join(FAMILIES)}")
    print(f"🔧 Log level: {os.getenv('LOG_LEVEL', 'WARNING')}")

    configs = list_available_configs()
    if configs:
        print(f"\n📚 AVAILABLE CONFIGS ({len(configs)})")
        print("-" * 40)
        for name in configs:
            print(f"   📄 {name}")
    else:
        print("\n📚 NO CONFIGS FOUND")
        print("-" * 40)
        print("   Add .json or .yaml files to configs/ to get started")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        description="Uniform-Hyperbolicity Spectrum Toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS,
                        help="What to run")

    # Model and energies
    parser.add_argument("--config", type=str,
                        help="Config file path or stored config name")
    parser.add_argument("--model", type=str, choices=FAMILIES,
                        help="Potential family (overrides the config's family)")
    parser.add_argument("--E", type=float, dest="E",
                        help="Energy for certify/green/witness")
    parser.add_argument("--E-range", type=str, dest="E_range",
                        help="Energy range 'a,b' for scan/compare")
    parser.add_argument("--step", type=float,
                        help="Energy grid step")

    # Numerics
    parser.add_argument("--depth", type=int,
                        help="Product length used by every test")
    parser.add_argument("--window", type=int,
                        help="Half-width W of the site window [-W, W]")
    parser.add_argument("--parallelism", type=int,
                        help="Worker threads for scans")
    parser.add_argument("--seed", type=int,
                        help="Seed of the random_iid family")

    # Output and interface
    parser.add_argument("--out", type=str,
                        help="Artifact prefix (default: output/<command>)")
    parser.add_argument("--progress", action="store_true", default=None,
                        help="Show a progress bar during scans")
    parser.add_argument("--list-configs", action="store_true",
                        help="List stored configs")
    parser.add_argument("--info", action="store_true",
                        help="Show system information")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_environment(quiet=not (args.info or args.list_configs or args.command))

    if args.list_configs:
        configs = list_available_configs()
        if configs:
            print(f"\n📚 Available configs ({len(configs)}):")
            for name in configs:
                print(f"   📄 {name}")
        else:
            print("\n📚 No configs found in configs/ directory")
        return 0

    if args.info:
        display_system_info()
        return 0

    if not args.command:
        parser.print_help()
        print(f"\n💡 TIP: Try 'python {Path(sys.argv[0]).name} scan --model constant' for a first run")
        return 1

    try:
        data = load_config_file(resolve_config_path(args.config)) if args.config else {}
        overrides = {"command": args.command, "model": args.model, "E": args.E, "E_range": args.E_range,
                     "step": args.step, "depth": args.depth, "window": args.window,
                     "parallelism": args.parallelism, "seed": args.seed, "out": args.out,
                     "progress": args.progress}
        config = build_config(data, overrides)
        print(f"\n🧮 {config.command.upper()}: {config.model.family} {config.model.params or ''}")
        print("=" * 50)
        run(config)
        return 0
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 1
    except (ArtifactIOError, OSError) as e:
        print(f"❌ Output error: {e}", file=sys.stderr)
        return 3
    except SpectralToolError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
