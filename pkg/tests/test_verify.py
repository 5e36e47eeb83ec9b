import json

from fbl import verify


class TestSuites:
    def test_all_pass_on_fresh_build(self):
        report = verify.run_all()
        assert report["all_passed"]
        names = [s["name"] for s in report["suites"]]
        assert len(names) >= 5
        assert len(set(names)) == len(names)

    def test_report_is_json_serializable(self):
        report = verify.run_all()
        restored = json.loads(json.dumps(report))
        assert restored["all_passed"] is True

    def test_sign_flip_mutation_breaks_gradient_check(self):
        report = verify.run_all(flip_df_extra_sign=True)
        by_name = {s["name"]: s for s in report["suites"]}
        assert not by_name["gradient_check"]["passed"]
        assert not report["all_passed"]
        # the flip only touches the feature-norm pathway, so everything else
        # still passes
        for name, suite in by_name.items():
            if name != "gradient_check":
                assert suite["passed"], name

    def test_gradient_check_runtime_budget(self):
        import time

        start = time.perf_counter()
        res = verify.gradient_check_suite(num_cases=20)
        elapsed = time.perf_counter() - start
        assert res.passed
        assert elapsed < 10.0

    def test_gradient_check_reports_worst_case(self):
        res = verify.gradient_check_suite(num_cases=4)
        assert res.details["cases"] == 4
        assert 0 <= res.details["max_rel_error"] < res.details["tol"]
