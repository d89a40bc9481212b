import math

import numpy as np
import pytest

from entity.Dataset import Dataset
from entity.KillMatrix import KillMatrix, PassedTestSet
from entity.ModelSpec import ModelSpec
from entity.MutantRecord import MutantRecord
from entity.MutationOperator import MutationLevel
from model_factory import constant_model, identity_model, one_hot_data, random_model, swap_model
from service.analysis.AnalysisService import AnalysisService
from service.analysis.ReportService import ReportService
from service.engine.ForwardService import ForwardService
from service.engine.ModelIOService import ModelIOService
from service.mutation.ModelMutationService import ModelMutationService
from service.train.TrainerService import TrainerService
from util.Errors import EmptyMutantSetError, EmptyPassedSetError


def record(mutant_id, model, operator="GF"):
    return MutantRecord(mutant_id, MutationLevel.MODEL, operator, 0, "parent", model=model,
                        checksum=ModelIOService.model_checksum(model))


def all_passed(labels, num_classes) -> PassedTestSet:
    return AnalysisService.filter_passed(identity_model(num_classes), one_hot_data(labels, num_classes))


def brute_force_killed(original, mutant, data):
    original_predictions = ForwardService.predict(original, data.features)
    mutant_predictions = ForwardService.predict(mutant, data.features)
    killed = set()
    for c in range(data.num_classes):
        for i in range(len(data)):
            if data.labels[i] == c and original_predictions[i] == c and mutant_predictions[i] != c:
                killed.add(c)
                break
    return killed


def random_kill_matrix(rng, num_classes=10):
    mutants = int(rng.integers(1, 21))
    support = rng.integers(0, 30, size=num_classes)
    errors = np.array([[rng.integers(0, s + 1) if rng.random() < 0.5 else 0 for s in support]
                       for _ in range(mutants)], dtype=np.int64)
    ids = [f"M-{i:04d}" for i in range(mutants)]
    return KillMatrix(ids, ["GF"] * mutants, [None] * mutants, errors > 0, errors, support)


class TestFilter:

    def test_perfect_model_keeps_everything(self):
        passed = all_passed([0, 1, 2, 2, 1], 3)
        assert len(passed) == 5
        assert passed.source_indices.tolist() == [0, 1, 2, 3, 4]

    def test_order_is_preserved(self):
        data = one_hot_data([2, 0, 1, 0, 2], 3)
        passed = AnalysisService.filter_passed(swap_model(3, 0, 1), data)
        assert passed.source_indices.tolist() == [0, 4]
        assert passed.original_labels.tolist() == [2, 2]

    def test_wrong_everywhere(self):
        with pytest.raises(EmptyPassedSetError):
            AnalysisService.filter_passed(constant_model(3, 0), one_hot_data([1, 2, 1], 3))

    def test_size_matches_accuracy(self, blobs, trained_blob_model):
        passed = AnalysisService.filter_passed(trained_blob_model, blobs)
        assert len(passed) == round(TrainerService.evaluate_accuracy(trained_blob_model, blobs) * len(blobs))

    def test_empty_tests(self):
        with pytest.raises(EmptyPassedSetError):
            AnalysisService.filter_passed(identity_model(3), Dataset(np.zeros((0, 3)), [], 3))


class TestPerMutant:

    def test_identical_mutant(self):
        passed = all_passed([0, 1, 2, 1], 3)
        assert AnalysisService.error_rate(identity_model(3), passed) == 0.0
        assert AnalysisService.killed_classes(identity_model(3), identity_model(3), passed) == set()

    def test_constant_mutant(self):
        labels = list(range(10)) * 3
        passed = all_passed(labels, 10)
        assert AnalysisService.error_rate(constant_model(10, 4), passed) == pytest.approx(27 / 30)
        assert AnalysisService.killed_classes(identity_model(10), constant_model(10, 4), passed) == \
            set(range(10)) - {4}

    def test_kill_condition_matches_brute_force(self):
        rng = np.random.default_rng(0)
        specs = [ModelSpec.mlp((5,), [], 4), ModelSpec.mlp((5,), [6], 4), ModelSpec.mlp((5,), [6, 6], 4)]
        mutator = ModelMutationService()
        for trial in range(50):
            spec = specs[trial % 3]
            original = random_model(spec, seed=trial, bias_scale=0.5)
            features = rng.random((200, 5)).astype(np.float32)
            tests = Dataset(features, ForwardService.predict(original, features), 4)
            passed = AnalysisService.filter_passed(original, tests)
            assert len(passed) == 200
            for k in range(10):
                mutant = mutator.mutate_gf(original, 0.5, sigma=0.5, seed=trial * 10 + k)
                killed = AnalysisService.killed_classes(original, mutant, passed)
                assert killed == brute_force_killed(original, mutant, passed.samples)
                assert (AnalysisService.error_rate(mutant, passed) == 0.0) == (killed == set())


class TestQualityControl:

    def test_strict_boundary(self):
        passed_20 = all_passed([0] * 16 + [1] * 4, 2)
        kept, excluded = AnalysisService.quality_control([record("A", constant_model(2, 0))], passed_20, 0.20)
        assert [r.mutant_id for r in kept] == ["A"] and excluded == {}

        passed_25 = all_passed([0] * 15 + [1] * 5, 2)
        kept, excluded = AnalysisService.quality_control([record("A", constant_model(2, 0))], passed_25, 0.20)
        assert kept == [] and excluded["A"]["error_rate"] == pytest.approx(0.25)

    def test_threshold_one_keeps_everything(self):
        passed = all_passed([0, 1, 1], 2)
        kept, excluded = AnalysisService.quality_control([record("A", constant_model(2, 0))], passed, 1.0)
        assert len(kept) == 1 and not excluded

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            AnalysisService.quality_control([], all_passed([0], 2), 0.0)

    def test_exclusion_leaves_surviving_rows_alone(self):
        passed = all_passed([0] * 8 + [1] * 1 + [2] * 1, 3)
        mutants = [record("A", swap_model(3, 1, 2)), record("B", constant_model(3, 1)), record("C", identity_model(3))]
        analysis = AnalysisService()
        with_qc = analysis.build_kill_matrix(mutants, passed, 0.20)
        without_qc = analysis.build_kill_matrix(mutants, passed, None)
        assert with_qc.mutant_ids == ["A", "C"] and list(with_qc.excluded) == ["B"]
        for row, mutant_id in enumerate(with_qc.mutant_ids):
            other = without_qc.mutant_ids.index(mutant_id)
            np.testing.assert_array_equal(with_qc.kill[row], without_qc.kill[other])


class TestMetrics:

    def test_formula_examples(self):
        assert AnalysisService.mutation_score([{0, 1, 2}, {3, 4, 5, 6}], 10) == 0.35
        assert AnalysisService.mutation_score([set(), set()], 10) == 0.0
        assert AnalysisService.mutation_score([set(range(10))] * 3, 10) == 1.0
        assert AnalysisService.ave_error_rate([0.0, 0.1, 0.2]) == pytest.approx(0.1)
        assert AnalysisService.ave_error_rate([0.05] * 4) == pytest.approx(0.05)

    def test_empty_mutant_set(self):
        with pytest.raises(EmptyMutantSetError):
            AnalysisService.mutation_score([], 10)
        with pytest.raises(EmptyMutantSetError):
            AnalysisService.ave_error_rate([])

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            matrix = random_kill_matrix(rng)
            total = 0
            for row in matrix.kill:
                for cell in row:
                    total += int(cell)
            assert AnalysisService.matrix_score(matrix) == total / (len(matrix.mutant_ids) * 10)
            rates = 0.0
            for row in matrix.class_errors:
                rates += (int(row.sum()) / matrix.passed_size) if matrix.passed_size else 0.0
            assert AnalysisService.matrix_aer(matrix) == rates / len(matrix.mutant_ids)

    def test_score_invariant_under_reordering_and_relabeling(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            matrix = random_kill_matrix(rng)
            rows = rng.permutation(len(matrix.mutant_ids))
            classes = rng.permutation(10)
            shuffled = KillMatrix([matrix.mutant_ids[i] for i in rows], matrix.operators, matrix.checksums,
                                  matrix.kill[rows][:, classes], matrix.class_errors[rows][:, classes],
                                  matrix.class_support[classes])
            assert AnalysisService.matrix_score(shuffled) == AnalysisService.matrix_score(matrix)

    def test_absent_class_cannot_be_killed(self):
        with pytest.raises(ValueError):
            KillMatrix(["A"], ["GF"], [None], [[True, True]], [[1, 1]], [3, 0])


class TestPerClass:

    def test_class_killed_by_every_mutant_scores_ten_percent(self):
        passed = all_passed(list(range(10)) * 2, 10)
        mutants = [record(f"M{i}", swap_model(10, 3, (4 + i) % 10)) for i in range(5)]
        matrix = AnalysisService().build_kill_matrix(mutants, passed, None)
        per_class = AnalysisService.per_class_from_matrix(matrix)
        assert per_class.loc[3, 'score'] == pytest.approx(0.10)
        assert per_class.loc[0, 'score'] == 0.0
        assert (per_class['score'] <= 0.10 + 1e-12).all()
        assert per_class['score'].sum() == pytest.approx(AnalysisService.matrix_score(matrix))

    def test_per_class_sets_match_matrix(self):
        labels = [0, 1, 2, 3] * 5
        passed = all_passed(labels, 4)
        models = [swap_model(4, 0, 1), constant_model(4, 2), identity_model(4)]
        by_class = {c: passed.class_subset(c) for c in range(4)}
        from_sets = AnalysisService.per_class_report(by_class, models, 4)
        matrix = AnalysisService().build_kill_matrix([record(f"M{i}", m) for i, m in enumerate(models)], passed, None)
        from_matrix = AnalysisService.per_class_from_matrix(matrix)
        np.testing.assert_allclose(from_sets['score'].to_numpy(), from_matrix['score'].to_numpy())
        np.testing.assert_allclose(from_sets['aer'].to_numpy(), from_matrix['aer'].to_numpy())

    def test_empty_class_is_not_applicable(self):
        passed = all_passed([0, 0, 1, 1], 3)
        matrix = AnalysisService().build_kill_matrix([record("A", constant_model(3, 0))], passed, None)
        report = AnalysisService.build_report(matrix)
        assert math.isnan(report.per_class.loc[2, 'score'])
        assert report.absent_classes == [2]
        assert "N/A" in report.table()
        assert report.to_dict()['per_class'][2]['score'] is None

    def test_higher_aer_does_not_mean_higher_score(self):
        # 类别 0：一个变异体误分类全部样本；类别 1：两个变异体各误分类一个样本
        matrix = KillMatrix(["M1", "M2"], ["GF", "GF"], [None, None],
                            [[True, True], [False, True]], [[10, 1], [0, 1]], [10, 10])
        per_class = AnalysisService.per_class_from_matrix(matrix)
        assert per_class.loc[0, 'aer'] > per_class.loc[1, 'aer']
        assert per_class.loc[0, 'score'] < per_class.loc[1, 'score']

    def test_higher_aer_does_not_mean_higher_score_for_test_sets(self):
        mutants = [record("A", constant_model(4, 0)), record("B", swap_model(4, 1, 2))]
        original = identity_model(4)
        analysis = AnalysisService()
        # 集合 X 集中在类别 1：错误率高但只能杀死一个类别
        x = analysis.build_kill_matrix(mutants, analysis.filter_passed(original, one_hot_data([1] * 9 + [3], 4)), None)
        y = analysis.build_kill_matrix(mutants, analysis.filter_passed(original, one_hot_data([0] * 7 + [1, 2, 3], 4)),
                                       None)
        assert analysis.matrix_aer(x) > analysis.matrix_aer(y)
        assert analysis.matrix_score(x) < analysis.matrix_score(y)


class TestReports:

    def test_kill_matrix_round_trip(self, tmp_path):
        passed = all_passed([0, 1, 2] * 4, 3)
        mutants = [record("B", swap_model(3, 0, 1), "NS"), record("A", constant_model(3, 2), "NEB")]
        analysis = AnalysisService(workers=2)
        matrix = analysis.build_kill_matrix(mutants, passed, 0.9)
        assert matrix.mutant_ids == ["A", "B"]
        ReportService.save_kill_matrix(matrix, str(tmp_path))
        reloaded = ReportService.load_kill_matrix(str(tmp_path))
        assert reloaded.mutant_ids == matrix.mutant_ids
        assert reloaded.checksums == matrix.checksums
        np.testing.assert_array_equal(reloaded.kill, matrix.kill)
        assert analysis.build_report(reloaded).to_dict() == analysis.build_report(matrix).to_dict()

    def test_report_files(self, tmp_path):
        passed = all_passed([0, 1, 2] * 4, 3)
        matrix = AnalysisService().build_kill_matrix([record("A", swap_model(3, 0, 1), "NS")], passed, None)
        report = AnalysisService.build_report(matrix, generated=3)
        paths = ReportService.write_report(report, str(tmp_path))
        with open(paths['table'], encoding='utf-8') as file:
            table = file.read()
        assert "mu. sc." in table and "avg.err." in table
        assert report.counts == {'generated': 3, 'excluded': 0, 'evaluated': 1}
        assert report.per_operator.loc["NS", 'mutants'] == 1

    def test_no_surviving_mutant(self):
        passed = all_passed([0, 1, 1, 1], 2)
        matrix = AnalysisService().build_kill_matrix([record("A", constant_model(2, 0))], passed, 0.2)
        with pytest.raises(EmptyMutantSetError):
            AnalysisService.build_report(matrix)

    def test_experiment_operator_means(self, tmp_path):
        rows = [
            {'setting': 1, 'repetition': 0, 'sampling': 'uniform', 'operator': 'GF',
             'mutants': 4, 'excluded': 0, 'score': 0.2, 'aer': 0.10},
            {'setting': 1, 'repetition': 1, 'sampling': 'uniform', 'operator': 'GF',
             'mutants': 4, 'excluded': 0, 'score': 0.4, 'aer': 0.30},
            {'setting': 1, 'repetition': 0, 'sampling': 'uniform', 'operator': 'NS',
             'mutants': 2, 'excluded': 1, 'score': 0.5, 'aer': 0.25},
            {'setting': 1, 'repetition': 0, 'sampling': 'nonuniform', 'operator': 'GF',
             'mutants': 4, 'excluded': 0, 'score': 0.1, 'aer': 0.05},
        ]
        table = ReportService.experiment_operator_table(rows)
        assert len(table) == 3
        gf = table[(table['sampling'] == 'uniform') & (table['operator'] == 'GF')].iloc[0]
        np.testing.assert_allclose([gf['score'], gf['aer']], [0.3, 0.2])
        assert gf['repetitions'] == 2
        path = ReportService.write_experiment_per_operator(table, str(tmp_path))
        assert path.endswith("experiment_per_operator.csv")

    def test_experiment_operator_table_empty(self):
        table = ReportService.experiment_operator_table([])
        assert table.empty and 'operator' in table.columns
