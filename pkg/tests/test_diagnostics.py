"""Tests for the DRO update ledger."""
import json
import math

from driqn.diagnostics import UpdateLedger, UpdateRecord


def record(update, converged=True, entropy=0.5, grad_norm=1.0):
    return UpdateRecord(update=update, step=10 * update, subgroups=[0, 1], lam=[0.25, 0.75], f=[0.1, 0.4],
                        delta_norm=0.2, grad_norm=grad_norm, converged=converged, lambda_entropy=entropy)


class TestLedger:
    def test_listener_fires_on_non_converged(self):
        ledger = UpdateLedger()
        seen = []
        ledger.add_listener(seen.append)
        ledger.record(record(1))
        ledger.record(record(2, converged=False))
        assert [r.update for r in seen] == [2]
        assert ledger.total == 2
        assert ledger.non_converged == 1

    def test_keep_bounds_memory(self):
        ledger = UpdateLedger(keep=3)
        for i in range(5):
            ledger.record(record(i))
        assert [r.update for r in ledger.records] == [2, 3, 4]
        assert ledger.total == 5

    def test_flush_appends_json_lines(self, tmp_path):
        ledger = UpdateLedger(tmp_path / "dro_log.jsonl")
        ledger.record(record(1))
        ledger.flush()
        ledger.record(record(2))
        ledger.flush()
        ledger.flush()
        lines = (tmp_path / "dro_log.jsonl").read_text().splitlines()
        assert [json.loads(line)["update"] for line in lines] == [1, 2]
        assert json.loads(lines[0])["lam"] == [0.25, 0.75]

    def test_flush_without_path(self):
        ledger = UpdateLedger()
        ledger.record(record(1))
        ledger.flush()
        assert len(ledger.records) == 1

    def test_window_means(self):
        ledger = UpdateLedger()
        ledger.record(record(1, entropy=0.2, grad_norm=1.0))
        ledger.record(record(2, entropy=0.4, grad_norm=3.0))
        ledger.record(record(3, entropy=0.6, grad_norm=5.0))
        entropy, grad_norm = ledger.window_means(since_update=1)
        assert math.isclose(entropy, 0.5)
        assert math.isclose(grad_norm, 4.0)

    def test_empty_window(self):
        entropy, grad_norm = UpdateLedger().window_means()
        assert math.isnan(entropy) and math.isnan(grad_norm)

    def test_report(self):
        ledger = UpdateLedger()
        assert "No updates" in ledger.generate_report()
        ledger.record(record(1, converged=False))
        report = ledger.generate_report()
        assert "DRO UPDATE REPORT" in report
        assert "Non-converged:  1" in report
        assert "mean λ 0.250" in report
