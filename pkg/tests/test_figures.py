from selftalk.figures import save_feelings_histogram, save_loss_curve, save_metric_bars
from selftalk.metrics import MetricReport


def test_loss_curve_written(tmp_path):
    path = tmp_path / "loss.png"
    save_loss_curve([3.0, 2.0, 1.5], path)
    assert path.stat().st_size > 0


def test_loss_curve_with_accuracy(tmp_path):
    path = tmp_path / "loss_acc.png"
    save_loss_curve([3.0, 2.0], path, accuracy=[0.4, 0.8])
    assert path.stat().st_size > 0


def test_metric_bars_written(tmp_path):
    report = MetricReport(0.5, 0.4, 0.7, 0.8, 0.6, 0.4, 0.2, items=10)
    path = tmp_path / "metrics.png"
    save_metric_bars(report, path, label="micro")
    assert path.stat().st_size > 0


def test_feelings_histogram_written(tmp_path):
    path = tmp_path / "feelings.png"
    save_feelings_histogram({"like": 4, "amusing": 2, "scared": 0}, path)
    assert path.stat().st_size > 0
