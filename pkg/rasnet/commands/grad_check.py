import click

from app.modules.autodiff.services import GradCheckService, primitive_cases
from app.modules.network.services import gradient_check_cases as network_cases
from app.modules.training.services import gradient_check_cases as training_cases
from core.managers.error_handler_manager import EXIT_RUNTIME


@click.command("grad-check", help="Compares every op and composite graph against finite differences.")
@click.option("--seeds", default=20, show_default=True, type=click.IntRange(min=1), help="Random seeds per case.")
@click.option("-k", "keyword", help="Only run cases whose name contains this substring.")
@click.pass_context
def grad_check(ctx, seeds, keyword):
    cases = primitive_cases() + network_cases() + training_cases()
    if keyword:
        cases = [case for case in cases if keyword in case.name]
        if not cases:
            raise click.UsageError(f"No gradient check case matches '{keyword}'")

    results = GradCheckService().run_suite(cases, seeds=seeds)
    for result in results:
        status = click.style("PASS", fg="green") if result.passed else click.style("FAIL", fg="red")
        click.echo(f"{status}  {result.name:<32} max rel error {result.max_error:.3e} (tolerance {result.tolerance:.0e})")

    failed = [result.name for result in results if not result.passed]
    if failed:
        click.echo(click.style(f"{len(failed)} of {len(results)} checks failed", fg="red"))
        ctx.exit(EXIT_RUNTIME)
    click.echo(click.style(f"All {len(results)} checks passed", fg="green"))
