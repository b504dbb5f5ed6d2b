"""
command line entry point

    python -m app.cli check-nut resources/protocols/nsl_xor_tagged.proto
    python -m app.cli analyze resources/protocols/nsl_xor.proto --scenario resources/protocols/nsl_two_session.scen
"""
import functools
import json
import logging
import sys
from pathlib import Path

import click
from dotenv import load_dotenv

from app import configure_logging
from app.config import THEORIES, STUB_THEORIES, AnalysisConfig
from app.schemas import NoAttackWithinBounds, TypeFlawAttack
from app.utils.analysis import TAG_SCHEMES, check_nut, find_typeflaw, solve_sequences
from app.utils.dsl_io import (
    emit_trace, format_protocol, load_protocol, load_scenario, parse_term, read_trace, render_trace,
)
from app.utils.errors import (
    ConfigError, IllTypedHonestSubstitution, ImpureProblem, InvariantViolation, ProtocolError,
    TraceFormatError, TypeflawError, UnknownVariable, UnsupportedTheory,
)
from app.utils.reports import as_text, nut_frame, sequences_frame, stats_frame
from app.utils.terms import format_substitution
from app.utils.unify_equational import unify_terms

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUT_VIOLATED = 1
EXIT_TYPE_FLAW = 2
EXIT_WELL_TYPED_ATTACK = 3
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_INVARIANT = 70


def exit_code_for(e: TypeflawError) -> int:
    if isinstance(e, InvariantViolation):
        return EXIT_INVARIANT
    if isinstance(e, (ConfigError, UnsupportedTheory, ImpureProblem)):
        return EXIT_USAGE
    if isinstance(e, (ProtocolError, IllTypedHonestSubstitution, UnknownVariable)):
        return EXIT_DATA
    return EXIT_INVARIANT


def guarded(fn):
    """turn analyzer errors into a message on stderr and a stable exit code"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TypeflawError as e:
            click.echo(f"error: {e}", err=True)
            return exit_code_for(e)
    return wrapper


class TypeflawGroup(click.Group):
    """usage errors exit 64; commands return their exit status"""

    def main(self, *args, standalone_mode=True, **kwargs):
        try:
            code = super().main(*args, standalone_mode=False, **kwargs)
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        code = code if isinstance(code, int) else EXIT_OK
        if not standalone_mode:
            return code
        sys.exit(code)


def _config(theory, rules, max_depth, max_states, xor_bound, verify, jobs=None) -> AnalysisConfig:
    config = AnalysisConfig.from_env(theory=theory, max_depth=max_depth, max_states=max_states,
                                     xor_subset_bound=xor_bound, verify=verify, jobs=jobs)
    return config.with_rules((rules or "").split(","))


def _write(text: str, output) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def search_options(fn):
    options = [
        click.option("--scenario", "scenario", required=True, type=click.Path(exists=True, dir_okay=False),
                     help="scenario file (.scen)"),
        click.option("--theory", type=click.Choice(THEORIES + STUB_THEORIES), default=None,
                     help="equational theory; defaults to the protocol's"),
        click.option("--rules", default="", help="comma separated weakness rules, e.g. prefix,assoc-pairs"),
        click.option("--max-depth", type=int, default=None),
        click.option("--max-states", type=int, default=None),
        click.option("--xor-bound", type=int, default=None, help="largest subset summed by xor_r"),
        click.option("--verify", is_flag=True, help="check solver invariants while searching"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group(cls=TypeflawGroup)
@click.option("-v", "--verbose", is_flag=True, help="log progress at INFO level")
def cli(verbose):
    """symbolic type-flaw attack analyzer"""
    load_dotenv()
    configure_logging(logging.INFO if verbose else None)


@cli.command("check-nut")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--commutative", is_flag=True, help="also flag tags voided by commuting encryption")
@guarded
def check_nut_command(protocol_file, commutative):
    """check non-unifiability of a protocol's compound terms"""
    protocol = load_protocol(protocol_file)
    report = check_nut(protocol, commutative=commutative)
    status = "satisfied" if report.satisfied else "violated"
    click.echo(f"{protocol.name}: NUT {status}")
    if report.violations or report.advisories:
        click.echo(as_text(nut_frame(report)))
    return EXIT_OK if report.satisfied else EXIT_NUT_VIOLATED


@cli.command("tag")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--scheme", type=click.Choice(sorted(TAG_SCHEMES)), default="types", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@guarded
def tag_command(protocol_file, scheme, output):
    """write the protocol with component numbers or type tags inserted"""
    tagged = TAG_SCHEMES[scheme](load_protocol(protocol_file))
    _write(format_protocol(tagged), output)
    return EXIT_OK


@cli.command("analyze")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@search_options
@click.option("--jobs", type=int, default=None, help="worker processes over constraint sequences")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="trace file (.trace.json)")
@click.option("--json", "as_json", is_flag=True, help="print the trace document instead of the rendering")
@guarded
def analyze_command(protocol_file, scenario, theory, rules, max_depth, max_states, xor_bound, verify,
                    jobs, output, as_json):
    """search for a type-flaw attack"""
    protocol = load_protocol(protocol_file)
    bundle = load_scenario(scenario, protocol)
    config = _config(theory, rules, max_depth, max_states, xor_bound, verify, jobs)
    verdict = find_typeflaw(bundle, config)

    document = emit_trace(verdict, protocol.name, bundle.name)
    text = json.dumps(document, indent=2, ensure_ascii=False) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
    click.echo(text if as_json else render_trace(document), nl=False)

    if isinstance(verdict, NoAttackWithinBounds):
        return EXIT_OK
    if isinstance(verdict, TypeFlawAttack):
        return EXIT_TYPE_FLAW
    return EXIT_WELL_TYPED_ATTACK


@cli.command("solve")
@click.argument("protocol_file", type=click.Path(exists=True, dir_okay=False))
@search_options
@guarded
def solve_command(protocol_file, scenario, theory, rules, max_depth, max_states, xor_bound, verify):
    """solve every constraint sequence of a scenario and list the satisfier counts"""
    protocol = load_protocol(protocol_file)
    bundle = load_scenario(scenario, protocol)
    rows = solve_sequences(bundle, _config(theory, rules, max_depth, max_states, xor_bound, verify))
    click.echo(as_text(sequences_frame(rows), empty="(no constraint sequences)"))
    return EXIT_OK


@cli.command("unify")
@click.argument("left")
@click.argument("right")
@click.option("--theory", type=click.Choice(THEORIES), default="std", show_default=True)
@click.option("--assoc", is_flag=True, help="pairing is associative")
@guarded
def unify_command(left, right, theory, assoc):
    """print a complete set of unifiers of two terms"""
    t, u = parse_term(left), parse_term(right)
    try:
        found = unify_terms(t, u, theory, assoc)
    except ImpureProblem as e:
        raise ConfigError(f"{e}; use --theory acun")
    if not found:
        click.echo("no unifier")
    for sigma in found:
        click.echo(format_substitution(sigma))
    return EXIT_OK


@cli.command("show")
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@guarded
def show_command(trace_file):
    """render a saved trace document with its search statistics"""
    try:
        document = json.loads(Path(trace_file).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"{trace_file}: {e}")
    verdict = read_trace(document)
    click.echo(render_trace(document), nl=False)
    click.echo(as_text(stats_frame(verdict.stats)))
    return EXIT_OK


if __name__ == "__main__":
    cli()
