import logging

import click
from pydantic import ValidationError

from enums import AuditGrouping, Container
from exceptions import ExtractorError
from schemas import RunConfig, SimConfig
from services.extraction_service import report_schema, run_extraction
from services.simulator_service import write_frames
from settings import setup_logging
from utils import canonical_json, read_key_value_file

logger = logging.getLogger(__name__)

# Schlüssel, die eine --config Datei setzen darf (Flag-Name mit "_" statt "-")
RUN_KEYS = set(RunConfig.model_fields) | {"frame_count"}


def load_sim_config(path: str, frame_count: int | None = None) -> SimConfig:
    values = read_key_value_file(path, set(SimConfig.model_fields))
    if frame_count is not None:
        values["frame_count"] = frame_count
    return SimConfig.model_validate(values)


def build_run_config(config_path: str | None, flags: dict) -> RunConfig:
    """
    Merges the optional key-value config file with the command line; flags given on
    the command line win.
    """
    values = read_key_value_file(config_path, RUN_KEYS) if config_path else {}
    values.update({key: value for key, value in flags.items() if value is not None})

    frame_count = values.pop("frame_count", None)
    if values.get("simulate") is not None:
        values["simulate"] = load_sim_config(values["simulate"], frame_count)
    return RunConfig.model_validate(values)


@click.group()
def cli():
    """Speckle frame random bit extractor."""
    setup_logging()


@cli.command()
@click.option("--frames", help="Glob of P5 / raw frames, processed in sorted order.")
@click.option("--simulate", "simulate", type=click.Path(exists=True, dir_okay=False), help="Simulator config file.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Key-value file mirroring these flags.")
@click.option("--mask", help='Mask image or "full".')
@click.option("--erode", type=int, help="Edge erosion radius in pixels.")
@click.option("--levels", type=int, help="Number of intensity sub-levels.")
@click.option("--noise-floor", type=int)
@click.option("--min-area", type=int)
@click.option("--connectivity", type=click.Choice(["4", "8"]))
@click.option("--bit-depth", type=int, help="Sample depth E of the input frames.")
@click.option("--weighted-centroids/--binary-centroids", default=None)
@click.option("--out", type=click.Path(dir_okay=False), help="Packed bit file.")
@click.option("--report", type=click.Path(dir_okay=False), help="JSON audit report.")
@click.option("--tests", help='"all", "none" or a comma list.')
@click.option("--seed", type=click.IntRange(0, 2**64 - 1))
@click.option("--frame-count", type=click.IntRange(0), help="Frames to simulate.")
@click.option("--workers", type=click.IntRange(1))
@click.option("--audit-block-bits", type=click.IntRange(100))
@click.option("--audit-grouping", type=click.Choice([g.value for g in AuditGrouping]), help="Failure counts per block or per frame.")
@click.option("--spot-dump", type=click.Path(dir_okay=False), help="CSV with one line per detected spot.")
@click.option("--save-frames", type=click.Path(file_okay=False), help="Directory for simulated frames.")
def run(config_path, connectivity, **flags):
    """Extract bits from frames and write the bit file and the audit report."""
    if connectivity is not None:
        flags["connectivity"] = int(connectivity)
    try:
        config = build_run_config(config_path, flags)
        result = run_extraction(config)
    except ValidationError as e:
        raise click.ClickException(f"invalid configuration:\n{e}")
    except (ExtractorError, ValueError, OSError) as e:
        logger.error(f"Extraktion abgebrochen: {e}")
        raise click.ClickException(str(e))

    aggregate = result.report.aggregate
    click.echo(
        f"{aggregate.frame_count} frames, {aggregate.total_bits} bits "
        f"({aggregate.bytes_written} bytes written, {aggregate.withheld_bits} withheld), "
        f"{aggregate.mean_bits_per_frame:.1f} bits/frame"
    )


@cli.command()
def schema():
    """Print the JSON schema of the audit report."""
    click.echo(canonical_json(report_schema()), nl=False)


@cli.command()
@click.option("--simulate", "simulate", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--frame-count", type=click.IntRange(0))
@click.option("--container", type=click.Choice([c.value for c in Container]), default=Container.PGM.value)
def simulate(simulate, out_dir, frame_count, container):
    """Write simulated speckle frames and their ground truth CSV."""
    try:
        paths = write_frames(load_sim_config(simulate, frame_count), out_dir, Container(container))
    except ValidationError as e:
        raise click.ClickException(f"invalid simulator configuration:\n{e}")
    except (ExtractorError, ValueError, OSError) as e:
        raise click.ClickException(str(e))
    click.echo(f"{len(paths)} frames written to {out_dir}")


if __name__ == "__main__":
    cli()
