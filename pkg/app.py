import json
import logging
import os
import sys

import click

import file_handler
from cert_store import (
    CertificateStore,
    CorruptFile,
    VerificationFailed,
    canonical_json,
    partition_certificate,
    table_certificate,
    verify_certificate,
    write_certificate,
    write_range_report,
)
from meta_prover import (
    MissingBaseCertificate,
    NoCandidateFound,
    PropertyStatus,
    ReportProvider,
    SuggestParams,
    check_base_window,
    check_properties,
    construct,
    construct_with_trace,
    suggest_rows,
    window_bound,
)
from partition_core import (
    ConstraintSpec,
    InvalidArgument,
    RecipartError,
    format_rational,
    parse_alpha,
    parse_partition,
    parse_rational,
)
from proof_tables import builtin_tables
from search_engine import (
    BudgetExhausted,
    SearchBudget,
    count,
    enumerate_partitions,
    find_one,
    verify_range,
)
from spectrum import (
    NALPHA_70,
    NM_TABLE,
    PUBLISHED_GROWTH,
    WindowChain,
    build_B,
    build_B_window,
    growth_frame,
    growth_table,
    nm_classify,
    nm_verify,
    write_growth_csv,
)

logger = logging.getLogger(__name__)

# --- Exit codes ---
FOUND = 0
ABSENT = 1
UNKNOWN = 2
USAGE = 3

DEFAULT_JOBS = os.cpu_count() or 1


# --- Parameter types ---

class AlphaType(click.ParamType):
    name = "alpha"

    def convert(self, value, param, ctx):
        try:
            return parse_alpha(value)
        except InvalidArgument as e:
            self.fail(str(e), param, ctx)


class ListType(click.ParamType):
    """Comma-separated values: "2,3,5" or "1,4/3,2"."""

    def __init__(self, item, name):
        self.item = item
        self.name = name

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return value
        try:
            return [self.item(piece.strip()) for piece in str(value).split(",") if piece.strip()]
        except (ValueError, InvalidArgument) as e:
            self.fail(f"{value!r} is not a list of {self.name}: {e}", param, ctx)


class ResidueType(click.ParamType):
    """"r:M" meaning n = r (mod M); returns (M, r)."""

    name = "residue"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            residue, modulus = (int(piece) for piece in str(value).split(":"))
        except ValueError:
            self.fail(f"{value!r} is not of the form r:M", param, ctx)
        if modulus < 1:
            self.fail(f"modulus must be positive in {value!r}", param, ctx)
        return modulus, residue % modulus


ALPHA = AlphaType()
INTS = ListType(int, "integers")
RATIONALS = ListType(parse_rational, "rationals")
RESIDUE = ResidueType()


def constraint_options(f):
    options = [
        click.option("--m-free", "m_free", type=int, multiple=True, help="No part divisible by M (repeatable)."),
        click.option("--primes", type=INTS, default=None, help="Allowed prime factors, e.g. 2,3,5."),
        click.option("--forbid", type=INTS, default=None, help="Parts that may not appear, e.g. 1,39."),
        click.option("--min-part", type=int, default=1, show_default=True),
        click.option("--max-part", type=int, default=None),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def budget_options(f):
    return click.option("--max-nodes", type=int, default=None, help="Cap on search nodes before giving up.")(f)


def solution_options(f):
    f = click.option("--max-solutions", type=int, default=None, help="Cap on solutions before giving up.")(f)
    return budget_options(f)


def make_spec(m_free, primes, forbid, min_part, max_part):
    return ConstraintSpec(
        m_free=tuple(m_free),
        allowed_primes=None if primes is None else frozenset(primes),
        forbidden=frozenset(forbid or ()),
        min_part=min_part,
        max_part=max_part,
    )


def make_budget(max_nodes, max_solutions=None):
    return SearchBudget(max_nodes=max_nodes, max_solutions=max_solutions)


def emit_json(payload):
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


def report_payload(report):
    return {
        "alpha": format_rational(report.alpha),
        "spec": report.spec.to_payload(),
        "lo": report.lo,
        "hi": report.hi,
        "residue": list(report.residue_filter) if report.residue_filter else None,
        "failures": report.failures,
        "unknown": report.unknown,
        "witnesses": {str(n): list(A.parts) for n, A in sorted(report.witnesses.items())},
    }


def report_code(report):
    if report.failures:
        return ABSENT
    if report.unknown:
        return UNKNOWN
    return FOUND


def echo_report(report):
    click.echo(f"alpha = {format_rational(report.alpha)}, {report.spec.describe()}, n in [{report.lo}, {report.hi}]"
               + (f", n = {report.residue_filter[1]} mod {report.residue_filter[0]}" if report.residue_filter else ""))
    click.echo(f"  witnessed: {len(report.witnesses)}")
    click.echo(f"  no witness: {report.failures if report.failures else 'none'}")
    if report.unknown:
        click.echo(f"  unknown (budget): {report.unknown}")


# --- Commands ---

@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Exact search and proof tools for alpha-partitions: distinct parts with a prescribed reciprocal sum."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@click.option("--n", "n", type=int, required=True)
@click.option("--alpha", type=ALPHA, required=True)
@constraint_options
@budget_options
@click.option("--json", "as_json", is_flag=True)
@click.option("--save", is_flag=True, help="Store the witness as a partition certificate.")
def find(n, alpha, m_free, primes, forbid, min_part, max_part, max_nodes, as_json, save):
    """Find one alpha-partition of n."""
    spec = make_spec(m_free, primes, forbid, min_part, max_part)
    A = find_one(n, alpha, spec, make_budget(max_nodes))
    if A is None:
        if as_json:
            emit_json({"n": n, "alpha": format_rational(alpha), "parts": None})
        else:
            click.echo(f"No {format_rational(alpha)}-partition of {n} ({spec.describe()})")
        return ABSENT
    if save:
        path = CertificateStore().save_partition(A, spec)
        click.echo(f"Saved {path}", err=True)
    if as_json:
        click.echo(canonical_json(partition_certificate(A, spec)), nl=False)
    else:
        click.echo(str(A))
    return FOUND


@cli.command(name="enum")
@click.option("--n", "n", type=int, required=True)
@click.option("--alpha", type=ALPHA, required=True)
@constraint_options
@solution_options
@click.option("--json", "as_json", is_flag=True)
def enum_command(n, alpha, m_free, primes, forbid, min_part, max_part, max_nodes, max_solutions, as_json):
    """List every alpha-partition of n."""
    spec = make_spec(m_free, primes, forbid, min_part, max_part)
    found = enumerate_partitions(n, alpha, spec, make_budget(max_nodes, max_solutions))
    if as_json:
        emit_json({"n": n, "alpha": format_rational(alpha), "spec": spec.to_payload(),
                   "partitions": [list(A.parts) for A in found]})
    else:
        for A in found:
            click.echo(str(A))
        click.echo(f"{len(found)} partitions", err=True)
    return FOUND if found else ABSENT


@cli.command(name="count")
@click.option("--n", "n", type=int, required=True)
@click.option("--alpha", type=ALPHA, required=True)
@constraint_options
@solution_options
@click.option("--json", "as_json", is_flag=True)
def count_command(n, alpha, m_free, primes, forbid, min_part, max_part, max_nodes, max_solutions, as_json):
    """Count the alpha-partitions of n."""
    spec = make_spec(m_free, primes, forbid, min_part, max_part)
    total = count(n, alpha, spec, make_budget(max_nodes, max_solutions))
    if as_json:
        emit_json({"n": n, "alpha": format_rational(alpha), "spec": spec.to_payload(), "count": total})
    else:
        click.echo(str(total))
    return FOUND if total else ABSENT


@cli.command(name="verify-range")
@click.option("--alpha", type=ALPHA, required=True)
@click.option("--lo", type=int, required=True)
@click.option("--hi", type=int, required=True)
@click.option("--residue", type=RESIDUE, default=None, help="Only n = r (mod M), written r:M.")
@constraint_options
@budget_options
@click.option("--jobs", type=int, default=DEFAULT_JOBS, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--save", is_flag=True, help="Write the witnesses as a range manifest.")
def verify_range_command(alpha, lo, hi, residue, m_free, primes, forbid, min_part, max_part, max_nodes, jobs,
                         as_json, save):
    """Check that every n in [lo, hi] has an alpha-partition."""
    spec = make_spec(m_free, primes, forbid, min_part, max_part)
    report = verify_range(alpha, spec, lo, hi, residue, budget=make_budget(max_nodes), jobs=jobs,
                          progress=not as_json)
    if save:
        path = write_range_report(report, file_handler.cert_dir())
        click.echo(f"Saved {path}", err=True)
    if as_json:
        emit_json(report_payload(report))
    else:
        echo_report(report)
    return report_code(report)


def echo_set(rational_set, as_json):
    if as_json:
        emit_json({"window": list(rational_set.window), "size": len(rational_set),
                   "members": [format_rational(a) for a in rational_set]})
    else:
        click.echo(f"{rational_set.label}: {len(rational_set)} rationals")
        click.echo(rational_set.render())


@cli.command()
@click.option("--n", "n", type=int, required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bset(n, jobs, as_json):
    """B(n): every reciprocal sum over the partitions of n into distinct parts."""
    echo_set(build_B(n, jobs=jobs), as_json)
    return FOUND


@cli.command()
@click.option("--lo", type=int, required=True)
@click.option("--hi", type=int, required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def bwindow(lo, hi, jobs, as_json):
    """B(lo, hi): the intersection of B(i) for lo <= i <= hi."""
    echo_set(build_B_window(lo, hi, jobs=jobs, progress=not as_json), as_json)
    return FOUND


@cli.command()
@click.option("--lo", type=int, required=True)
@click.option("--hi", type=int, required=True)
@click.option("--N", "N", type=int, required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--json", "as_json", is_flag=True)
def growth(lo, hi, N, jobs, csv_path, as_json):
    """|B(n,N) minus B(n-1,N)| for lo <= n <= hi."""
    rows = growth_table(lo, hi, N, jobs=jobs, progress=not as_json)
    if csv_path:
        write_growth_csv(rows, csv_path)
        click.echo(f"Saved {csv_path}", err=True)
    if as_json:
        emit_json([{"n": n, "count": c} for n, c in rows])
    else:
        click.echo(growth_frame(rows).to_string(index=False))
    return FOUND


@cli.command()
@click.option("--M", "M", type=int, required=True)
@click.option("--verify", is_flag=True, help="Re-check the value by search up to --horizon.")
@click.option("--horizon", type=int, default=136, show_default=True)
@click.option("--jobs", type=int, default=DEFAULT_JOBS, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def nm(M, verify, horizon, jobs, as_json):
    """N_M: the threshold for M-free 1-partitions."""
    if M < 2:
        raise click.BadParameter("M must be >= 2", param_hint="--M")
    case = nm_classify(M)
    payload = {
        "M": M,
        "classification": case.classification.value,
        "divisor_witness": case.divisor_witness,
        "value": case.value,
        "exact": case.exact,
        "congruence_caveat": case.congruence_caveat,
    }
    code = FOUND
    if verify:
        result = nm_verify(M, horizon, jobs=jobs)
        payload["below"] = result.below
        payload["below_refuted"] = result.below_refuted
        payload["range"] = report_payload(result.report) if result.report else None
        if not result.holds:
            code = ABSENT
        elif result.report is not None and result.report.unknown:
            code = UNKNOWN
    if as_json:
        emit_json(payload)
    else:
        click.echo(case.describe())
        if verify:
            if result.below is not None:
                click.echo(f"  n = {result.below}: " + ("no witness, as expected" if result.below_refuted
                                                        else "has a witness"))
            if result.report is not None:
                echo_report(result.report)
    return code


@cli.command()
@click.option("--tables", "name", required=True, help="graham-q, graham-s, sp(p), m469(M), odd15, arbsmall(k)")
@click.option("--X", "X", type=int, default=None, help="Base threshold; defaults to the collection's own.")
@click.option("--base/--no-base", default=False, help="Also search the base window.")
@click.option("--exclude", type=RATIONALS, default=None, help="alphas to skip in the base window.")
@click.option("--jobs", type=int, default=DEFAULT_JOBS, show_default=True)
@click.option("--save", is_flag=True, help="Write a proof-table certificate (and base-window manifests).")
@click.option("--json", "as_json", is_flag=True)
def prove(name, X, base, exclude, jobs, save, as_json):
    """Check the five properties of a proof-table collection, and optionally its base window."""
    tables = builtin_tables(name)
    if X is not None:
        tables = tables.with_X(X)
    reports = check_properties(tables)
    payload = {"tables": tables.name, "X": tables.X, "properties": {},
               "focus": None if tables.focus is None else format_rational(tables.focus)}
    for alpha, report in reports.items():
        payload["properties"][format_rational(alpha)] = {
            r.name: {"status": r.status.value, "detail": r.detail, "counterexample": r.counterexample}
            for r in report.all_results()
        }
    statuses = {r.status for report in reports.values() for r in report.all_results()}

    windows = {}
    if base:
        windows = check_base_window(tables, jobs=jobs, exclude=exclude or (), progress=not as_json)
        payload["base_window"] = {
            "hi": window_bound(tables, tables.X),
            "reports": {format_rational(a): {"failures": r.failures, "unknown": r.unknown}
                        for a, r in windows.items()},
        }
    if save:
        directory = file_handler.cert_dir()
        if statuses == {PropertyStatus.VERIFIED}:
            path = write_certificate(table_certificate(tables),
                                     os.path.join(directory, f"tables-{tables.name.replace('/', '_')}.json"))
            click.echo(f"Saved {path}", err=True)
        else:
            click.echo("Not saving the tables: some property is not verified", err=True)
        for report in windows.values():
            click.echo(f"Saved {write_range_report(report, directory)}", err=True)

    if as_json:
        emit_json(payload)
    else:
        click.echo(tables.describe())
        for alpha, report in reports.items():
            line = ", ".join(f"{r.name} {r.status.value}" for r in report.all_results())
            click.echo(f"  alpha = {format_rational(alpha)}: {line}")
            for r in report.all_results():
                if r.status != PropertyStatus.VERIFIED:
                    click.echo(f"    {r.name}: {r.detail}")
        for alpha, report in windows.items():
            echo_report(report)

    if PropertyStatus.REFUTED in statuses or any(r.failures for r in windows.values()):
        return ABSENT
    if PropertyStatus.INCONCLUSIVE in statuses or any(r.unknown for r in windows.values()):
        return UNKNOWN
    return FOUND


@cli.command(name="construct")
@click.option("--tables", "name", required=True)
@click.option("--alpha", type=ALPHA, required=True)
@click.option("--n", "n", type=int, required=True)
@click.option("--store/--no-store", default=True, help="Use stored certificates for the base case.")
@click.option("--live/--no-live", default=True, help="Fall back to a live search for the base case.")
@click.option("--max-nodes", type=int, default=None)
@click.option("--json", "as_json", is_flag=True)
def construct_command(name, alpha, n, store, live, max_nodes, as_json):
    """Build an alpha-partition of n by unrolling a proof-table induction."""
    tables = builtin_tables(name)
    try:
        A, steps = construct_with_trace(alpha, n, tables, CertificateStore() if store else None,
                                        live_search=live, budget=make_budget(max_nodes))
    except MissingBaseCertificate as e:
        click.echo(str(e), err=True)
        return UNKNOWN
    if as_json:
        payload = json.loads(canonical_json(partition_certificate(A, tables.Q)))
        payload["trace"] = [{"alpha": format_rational(s.alpha), "n": s.n, "row": s.row_index, "source": s.source}
                            for s in steps]
        emit_json(payload)
    else:
        click.echo(str(A))
        base = steps[-1]
        click.echo(f"{len(steps) - 1} induction steps, base case alpha = {format_rational(base.alpha)}, "
                   f"n = {base.n} from {base.source}", err=True)
    return FOUND


@cli.command()
@click.option("--alpha", type=ALPHA, required=True)
@click.option("--S", "S", type=RATIONALS, required=True, help="The ambient set, e.g. 1,4/3,2.")
@constraint_options
@click.option("--m", "m_values", type=INTS, default="2", show_default=True)
@click.option("--pool-max", type=int, default=100, show_default=True)
@click.option("--max-sum", type=int, default=400, show_default=True)
@click.option("--max-nodes", type=int, default=200_000, show_default=True)
@click.option("--X", "X", type=int, default=None, help="Base threshold the rows are for.")
@click.option("--json", "as_json", is_flag=True)
def synth(alpha, S, m_free, primes, forbid, min_part, max_part, m_values, pool_max, max_sum, max_nodes, X, as_json):
    """Suggest proof-table rows for alpha over S."""
    Q = make_spec(m_free, primes, forbid, min_part, max_part)
    params = SuggestParams(m_values=tuple(m_values), pool_max=pool_max, max_sum=max_sum,
                           budget=make_budget(max_nodes), X=X)
    try:
        suggestion = suggest_rows(alpha, S, Q, params)
    except NoCandidateFound as e:
        click.echo(str(e), err=True)
        return ABSENT
    if as_json:
        emit_json({"alpha": format_rational(alpha), "modulus": suggestion.modulus,
                   "complete": suggestion.complete, "covered": suggestion.covered,
                   "rows": [{"i": r.index, "m": r.m, "beta": format_rational(r.beta), "A": list(r.A)}
                            for r in suggestion.rows]})
    else:
        for r in suggestion.rows:
            click.echo(f"  i={r.index} m={r.m} beta={format_rational(r.beta)} A={{{','.join(map(str, r.A))}}}"
                       f"  (sum {r.total})")
        click.echo(f"residues covered mod {suggestion.modulus}: {suggestion.covered}")
    return FOUND if suggestion.complete else UNKNOWN


@cli.command(name="verify-cert")
@click.argument("paths", nargs=-1, required=True, type=click.Path())
def verify_cert(paths):
    """Re-check certificate files from their raw contents."""
    code = FOUND
    for path in paths:
        try:
            click.echo(str(verify_certificate(path)))
        except VerificationFailed as e:
            click.echo(f"{path}: FAILED: {e.claim}")
            code = max(code, ABSENT)
        except CorruptFile as e:
            click.echo(f"{path}: unreadable: {e}", err=True)
            code = USAGE
    return code


# --- Reproduction recipes ---

def _check(label, ok):
    click.echo(f"  [{'ok' if ok else 'FAIL'}] {label}")
    return ok


def repro_graham(jobs):
    tables = builtin_tables("graham-q")
    ok = _check("graham-q properties", all(r.verified for r in check_properties(tables).values()))
    windows = check_base_window(tables, jobs=jobs)
    ok &= _check("base window [78, 333]", all(r.holds for r in windows.values()))
    provider = ReportProvider(windows)
    for n in (334, 1000, 12345, 999_999):
        A = construct(1, n, tables, provider)
        ok &= _check(f"construct n={n}", A.n == n and A.alpha == 1 and not {1, 39} & set(A.parts))
    return ok


def repro_graham_s(jobs):
    tables = builtin_tables("graham-s")
    ok = _check("graham-s properties", all(r.verified for r in check_properties(tables).values()))
    return ok & _check("base window [79, 218]", all(r.holds for r in check_base_window(tables, jobs=jobs).values()))


def repro_unique91(jobs):
    found = enumerate_partitions(91, 1)
    return _check("the only 1-partition of 91 is {3,4,6,11,12,22,33}",
                  [A.parts for A in found] == [parse_partition("3,4,6,11,12,22,33").parts])


def repro_m7(jobs):
    spec = ConstraintSpec(m_free=(7,))
    ok = _check("7-free 1-partitions for 97..112", verify_range(1, spec, 97, 112, jobs=jobs).holds)
    return ok & _check("no 7-free 1-partition of 96", find_one(96, 1, spec) is None)


def repro_m9(jobs):
    return _check("9-free 1-partitions for 91..136",
                  verify_range(1, ConstraintSpec(m_free=(9,)), 91, 136, jobs=jobs).holds)


def repro_count151(jobs):
    found = enumerate_partitions(151, 1)
    ok = _check("34 1-partitions of 151", len(found) == 34)
    return ok & _check("each has a multiple of 3", all(any(a % 3 == 0 for a in A) for A in found))


def repro_b65(jobs):
    return _check("B(65,78) is empty", len(build_B_window(65, 78, jobs=jobs)) == 0)


def repro_b100(jobs):
    chain = WindowChain(64, 136, keep_sets=(70, 77, 78, 100), jobs=jobs, progress=True)
    ok = _check("|B(100,136)| = 4314", chain.size(100) == 4314)
    ok &= _check("growth 65..100 matches", dict(chain.growth(65, 100)) == PUBLISHED_GROWTH)
    ok &= _check("B(70,136) is the nine known rationals", set(chain.window(70)) == set(NALPHA_70))
    return ok & _check("1 enters at 78", 1 in chain.window(78) and 1 not in chain.window(77))


def repro_s3window(jobs):
    tables = builtin_tables("sp(3)")
    windows = check_base_window(tables, jobs=jobs, exclude=[2], progress=True)
    return _check("S_3 window [814, 1638]", all(r.holds for r in windows.values()))


def repro_odd15(jobs):
    tables = builtin_tables("odd15")
    ok = _check("odd15 properties and mod 8 variant", all(r.verified for r in check_properties(tables).values()))
    report = verify_range(1, tables.Q, 3609, 6000, (8, 1), jobs=jobs, progress=True)
    return ok & _check("{3,5,7}-full 1-partitions for n = 1 mod 8 in [3609, 6000]", report.holds)


def repro_twofive(jobs):
    tables = builtin_tables("sp(5)")
    ok = _check("sp(5) properties and mod 3 variant", all(r.verified for r in check_properties(tables).values()))
    report = verify_range(1, ConstraintSpec(allowed_primes={2, 5}), 3634, 5000, (3, 1), jobs=jobs, progress=True)
    return ok & _check("{2,5}-full 1-partitions for n = 1 mod 3 in [3634, 5000]", report.holds)


def repro_nm_table(jobs):
    ok = True
    for M in sorted(NM_TABLE):
        case = nm_classify(M)
        if not case.exact:
            click.echo(f"  [skip] {case.describe()}: upper bound only")
            continue
        # one full residue period above the threshold, so at least one n is searched
        result = nm_verify(M, horizon=case.value + (case.congruence_caveat or 1) - 1, jobs=jobs)
        ok &= _check(f"{case.describe()}: none at {result.below}, found from {case.value}",
                     result.below_refuted is True and result.holds)
    return ok


RECIPES = {
    "graham": repro_graham,
    "graham-s": repro_graham_s,
    "unique91": repro_unique91,
    "m7": repro_m7,
    "m9": repro_m9,
    "count151": repro_count151,
    "b65": repro_b65,
    "b100": repro_b100,
    "s3window": repro_s3window,
    "odd15": repro_odd15,
    "twofive": repro_twofive,
    "nm-table": repro_nm_table,
}


@cli.command()
@click.argument("recipe", type=click.Choice(sorted(RECIPES)))
@click.option("--jobs", type=int, default=DEFAULT_JOBS, show_default=True)
def repro(recipe, jobs):
    """Run a named reproduction recipe."""
    click.echo(f"{recipe}:")
    return FOUND if RECIPES[recipe](jobs) else ABSENT


def main(argv=None):
    try:
        code = cli.main(args=argv, prog_name="recipart", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return USAGE
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        return USAGE
    except BudgetExhausted as e:
        click.echo(f"unknown: {e} after {e.nodes} nodes", err=True)
        return UNKNOWN
    except RecipartError as e:
        click.echo(f"error: {e}", err=True)
        return USAGE
    return code if isinstance(code, int) else FOUND


if __name__ == "__main__":
    sys.exit(main())
