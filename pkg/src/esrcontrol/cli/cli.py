"""esrctl: run optimal-control experiments on the virtual spectrometer."""

__all__ = ['app', 'optimize', 'sweep', 'spectrum', 'gradcheck']

from pathlib import Path
from typing import List, Optional

import typer
from rich import print
from rich.table import Table

from ..app.bus import InProcessBus, log_progress
from ..app.campaign import SWEEP_VARIABLES, run_campaign, sweep as run_sweep
from ..app.config import ExperimentConfig, config_hash, load_config
from ..app.gradcheck import CheckSettings, run_gradcheck
from ..app.recorder import ArtifactSession
from ..core.errors import ConfigError
from ..core.spin import stick_spectrum
from ..log import configure_logging
from ..persistence import get_store

app = typer.Typer(name="esrctl", help="Closed- and open-loop optimal control on a simulated ESR spectrometer.")

def config_option():
    return typer.Option(..., "--config", "-c", exists=True, dir_okay=False, help="Experiment TOML file")


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    configure_logging(verbose)


def _load(path: Path, **overrides) -> ExperimentConfig:
    try:
        return load_config(path, **overrides)
    except ConfigError as e:
        print(f"[red]Invalid config {path}: {e}[/red]")
        raise typer.Exit(code=2)


def _split(values: str) -> List[str]:
    return [v.strip() for v in values.split(",") if v.strip()]


@app.command(help="Run an optimization campaign and write its artifacts")
def optimize(
    config: Path = config_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (default: output_dir from config)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    trials: Optional[int] = typer.Option(None, "--trials", help="Number of trials"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker processes for trials"),
    db: Optional[str] = typer.Option(None, "--db", help="Result store URL, e.g. sqlite:///results.db"),
):
    """
    Outputs in the run directory:
    - history.jsonl: one iteration record per line
    - summary.csv: per-iteration fidelities of every trial
    - campaign.json, convergence.svg and pulses/trial_NNN.txt
    """
    cfg = _load(config, seed=seed, trials=trials, threads=threads, output_dir=out)
    chash = config_hash(cfg)
    bus = InProcessBus()
    bus.subscribe(log_progress)
    result, outcomes = run_campaign(cfg, bus, label=config.stem)
    get_store(db).save(result)

    with ArtifactSession(cfg.output_dir, cfg.seed, chash) as session:
        session.add_campaign(result, outcomes, title=f"{config.stem} ({cfg.optimizer.method})")
        session.commit()

    table = Table(title=f"{config.stem} [{chash}]")
    for col in ("trial", "iterations", "final quality", "stop reason"):
        table.add_column(col)
    for o in outcomes:
        table.add_row(str(o.trial), str(len(o.run.records) - 1), f"{o.final_quality:.4f}", o.run.stop_reason)
    print(table)
    print(f"[green]Mean {result.mean:.4f} +- {result.std:.4f} over {result.trials} trials; "
          f"artifacts in {cfg.output_dir}[/green]")


@app.command(help="Cross-product campaign over a sweep variable and methods")
def sweep(
    config: Path = config_option(),
    variable: str = typer.Option(..., "--variable", help=f"One of {', '.join(SWEEP_VARIABLES)}"),
    values: str = typer.Option(..., "--values", help="Comma-separated sweep values"),
    methods: str = typer.Option("", "--methods", help="Comma-separated method labels, e.g. hqca,fd-linear,fd-slepian"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    trials: Optional[int] = typer.Option(None, "--trials", help="Trials per cell"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker processes for trials"),
    db: Optional[str] = typer.Option(None, "--db", help="Result store URL"),
):
    cfg = _load(config, seed=seed, trials=trials, threads=threads, output_dir=out)
    bus = InProcessBus()
    bus.subscribe(log_progress)
    try:
        table = run_sweep(cfg, variable, _split(values), _split(methods), store=get_store(db), bus=bus)
    except ValueError as e:
        print(f"[red]Sweep rejected: {e}[/red]")
        raise typer.Exit(code=2)

    with ArtifactSession(cfg.output_dir, cfg.seed, config_hash(cfg)) as session:
        session.add(f"sweep_{variable}.csv", f"# seed={cfg.seed} config_hash={config_hash(cfg)}\n" + table.to_csv())
        session.commit()

    view = Table(title=f"{variable} sweep")
    view.add_column(variable)
    for m in table.methods:
        view.add_column(m)
    for v in table.values:
        cells = [table.cell(v, m) for m in table.methods]
        view.add_row(v, *[f"{c.mean:.3f}({round(c.std * 1000):02d})" for c in cells])
    print(view)


@app.command(help="List allowed-transition offsets and nuclear frequencies")
def spectrum(config: Path = config_option()):
    cfg = _load(config)
    sticks = stick_spectrum(cfg.system)
    table = Table(title="Stick spectrum (MHz)")
    table.add_column("line")
    table.add_column("frequency", justify="right")
    table.add_row("allowed transition L", f"{sticks.transition_offsets[0]:+.3f}")
    table.add_row("allowed transition R", f"{sticks.transition_offsets[1]:+.3f}")
    table.add_row("nuclear |w12|", f"{sticks.nuclear_frequencies[0]:.3f}")
    table.add_row("nuclear |w34|", f"{sticks.nuclear_frequencies[1]:.3f}")
    print(table)
    if sticks.degenerate:
        print("[yellow]Nuclear frequencies are degenerate; level ordering is ambiguous[/yellow]")


@app.command(help="Run the gradient property suites on the configured system")
def gradcheck(
    config: Path = config_option(),
    pulses: int = typer.Option(5, "--pulses", help="Random pulses per check"),
    segments: int = typer.Option(20, "--segments", help="Segments per random pulse"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for the random pulses"),
):
    cfg = _load(config, seed=seed)
    settings = CheckSettings(n_pulses=pulses, M=segments, dt=cfg.pulse.dt, seed=cfg.seed)
    results = run_gradcheck(cfg.spectrometer(), settings)

    table = Table(title="Gradient checks")
    for col in ("check", "result", "measured", "tolerance", "detail"):
        table.add_column(col)
    for r in results:
        verdict = "[blue]info[/blue]" if r.informational else ("[green]pass[/green]" if r.passed else "[red]FAIL[/red]")
        table.add_row(r.name, verdict, f"{r.measured:.6g}", f"{r.tolerance:g}", r.detail)
    print(table)
    if not all(r.passed for r in results):
        raise typer.Exit(code=1)
