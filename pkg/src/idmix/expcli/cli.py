"""Command line entry point: ``idmix run | presets | validate | simulate``."""

from __future__ import annotations

import sys

import click

from ..errors import ConfigError, IdmixError
from .config import from_dict, load_config
from .presets import PRESETS, list_presets
from .runner import EXIT_RUNTIME, EXIT_VALIDATION, Runner


def _load(config, preset, seed):
    if (config is None) == (preset is None):
        raise ConfigError("give exactly one of CONFIG or --preset")
    if config is not None:
        return load_config(config)
    raw = {"preset": preset}
    if seed is not None:
        raw["simulation"] = {"seed": seed}
    return from_dict(raw, source=f"preset:{preset}")


def _config_or_exit(config, preset, seed):
    try:
        return _load(config, preset, seed)
    except ConfigError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


config_arg = click.argument("config", required=False, type=click.Path(dir_okay=False))
preset_opt = click.option("--preset", "preset", default=None, help="Use a built-in preset instead of a file.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the preset seed.")
out_opt = click.option("--output", "-o", "output", default=None, type=click.Path(file_okay=False),
                       help="Artifact directory (default: output.directory, or $OUTPUT_DIR).")


@click.group()
@click.version_option(package_name="artifact", prog_name="idmix")
def main():
    """Mixing and ergodicity diagnostics for stationary ID random fields."""


@main.command()
@config_arg
@preset_opt
@seed_opt
@out_opt
def run(config, preset, seed, output):
    """Run every diagnostic listed in CONFIG and write the artifact directory."""
    cfg = _config_or_exit(config, preset, seed)
    result = Runner(cfg, output).run()
    for row in result.rows:
        diag, seq, verdict = row[0], row[1], row[2]
        click.echo(f"{diag:<16} {seq:<16} {verdict}")
    for f in result.failures:
        click.echo(f"failed: {f['diagnostic']} {f['sequence']}: {f['error']}", err=True)
    click.echo(f"artifacts: {result.outdir}")
    sys.exit(result.exit_code)


@main.command()
@click.option("--show", default=None, help="Print the full config of one preset as JSON.")
def presets(show):
    """List the built-in model zoo."""
    if show is not None:
        if show not in PRESETS:
            click.echo(f"unknown preset {show!r}", err=True)
            sys.exit(EXIT_VALIDATION)
        import json
        click.echo(json.dumps(PRESETS[show].config(), indent=2))
        return
    for name, desc, expected in list_presets():
        click.echo(f"{name:<18} {desc} ({expected})")


@main.command()
@config_arg
@preset_opt
@seed_opt
def validate(config, preset, seed):
    """Parse and validate CONFIG without running anything."""
    cfg = _config_or_exit(config, preset, seed)
    click.echo(f"ok: {cfg.source or config} (seed {cfg.seed}, diagnostics: {', '.join(cfg.diagnostics['run'])})")


@main.command()
@config_arg
@preset_opt
@seed_opt
@out_opt
def simulate(config, preset, seed, output):
    """Simulate the configured field and cache the realization only."""
    cfg = _config_or_exit(config, preset, seed)
    try:
        result = Runner(cfg, output).simulate_only()
    except IdmixError as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"artifacts: {result.outdir}")
    sys.exit(result.exit_code)


if __name__ == "__main__":
    main()
