import click

from app.modules.evaluation.models import DEFAULT_BETA2
from app.modules.evaluation.services import EvaluationService


@click.command("eval", help="Scores a directory of predicted PGMs against ground-truth masks (max F-measure, MAE).")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Predicted maps.")
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Masks (or dataset root).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), help="JSON report path.")
@click.option("--pr", "pr_path", type=click.Path(dir_okay=False), help="PR curve CSV path.")
@click.option("--beta2", default=DEFAULT_BETA2, show_default=True, type=float, help="F-measure beta squared.")
@click.option("--per-image", is_flag=True, help="Average per-image PR curves instead of pooling counts.")
def evaluate(pred_dir, gt_dir, report_path, pr_path, beta2, per_image):
    if beta2 <= 0:
        raise click.BadParameter("beta2 must be positive", param_hint="--beta2")
    service = EvaluationService()
    report = service.evaluate_dataset(pred_dir, gt_dir, beta2=beta2, mode="per_image" if per_image else "aggregate")
    service.write_report(report, report_path=report_path, pr_path=pr_path)

    click.echo(f"Images: {report.num_images} ({len(report.excluded)} excluded from PR)")
    click.echo(f"Max F-measure: {report.max_f_measure:.6f} at threshold {report.argmax_threshold}")
    click.echo(f"MAE: {report.mae:.6f}")
