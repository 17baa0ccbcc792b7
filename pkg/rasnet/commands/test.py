import os
import subprocess

import click


@click.command("test", help="Runs pytest on the modules and CLI tests, or on a specific module.")
@click.argument("module_name", required=False)
@click.option("-k", "keyword", help="Only run tests that match the given substring expression.")
@click.option("--cov", is_flag=True, help="Collect coverage for the tested code.")
@click.option("--slow", is_flag=True, help="Also run the slow desk-scale training tests.")
def test(module_name, keyword, cov, slow):
    working_dir = os.getenv("WORKING_DIR", "")
    base_path = os.path.join(working_dir, "app/modules")
    test_paths = [base_path, os.path.join(working_dir, "rasnet/tests")]

    if module_name:
        test_paths = [os.path.join(base_path, module_name)]
        if not os.path.exists(test_paths[0]):
            raise click.UsageError(f"Module '{module_name}' does not exist.")
        click.echo(f"Running tests for the '{module_name}' module...")
    else:
        click.echo("Running tests for all modules...")

    pytest_cmd = ["pytest", "-v", *test_paths]

    if keyword:
        pytest_cmd.extend(["-k", keyword])
    if cov:
        pytest_cmd.extend(f"--cov={path}" for path in test_paths)
    if slow:
        pytest_cmd.extend(["-m", "slow or not slow"])

    try:
        subprocess.run(pytest_cmd, check=True)
    except subprocess.CalledProcessError as e:
        click.echo(click.style(f"Error running tests: {e}", fg="red"))
        return 2
