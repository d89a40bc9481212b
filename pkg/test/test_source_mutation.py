from collections import Counter

import numpy as np
import pytest

from entity.Dataset import Dataset
from entity.LayerKind import ActivationKind, LayerKind
from entity.ModelSpec import LayerSpec, ModelSpec
from entity.MutationOperator import DataOp, DataOpKind, MutationLevel, ProgramOp, ProgramOpKind, Scope
from entity.TrainConfig import TrainConfig
from entity.TrainedModel import TrainedModel
from model_factory import random_model
from service.engine.ForwardService import ForwardService
from service.mutation.SourceMutationService import SourceMutationService
from util.Errors import ClassExhaustedError, NoEligibleTargetError
from util.SelectionUtil import SelectionUtil

SEEDS = range(200)


@pytest.fixture(scope="module")
def data() -> Dataset:
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(4), 25)
    return Dataset(rng.random((100, 3)), labels, 4)


class TestSelectionCount:

    @pytest.mark.parametrize("ratio, population, expected", [
        (0.01, 100, 1), (0.01, 50, 1), (0.01, 1000, 10), (0.01, 60000, 600), (1.0, 7, 7), (0.5, 3, 2), (0.0, 10, 0),
    ])
    def test_examples(self, ratio, population, expected):
        assert SelectionUtil.selection_count(ratio, population) == expected


class TestDataOperators:

    def test_dr_appends_duplicates(self, data):
        for seed in SEEDS:
            mutated = SourceMutationService.mutate_data(data, DataOp(DataOpKind.DR, ratio=0.05, seed=seed))
            assert len(mutated) == 105
            assert mutated.features[:100].tobytes() == data.features.tobytes()
            original = Counter(data.sample_keys())
            extra = Counter(mutated.sample_keys()) - original
            assert sum(extra.values()) == 5 and not (set(extra) - set(original))

    def test_le_changes_exactly_k_labels(self, data):
        for seed in SEEDS:
            mutated = SourceMutationService.mutate_data(data, DataOp(DataOpKind.LE, ratio=0.1, seed=seed))
            assert np.count_nonzero(mutated.labels != data.labels) == 10
            assert mutated.features.tobytes() == data.features.tobytes()

    def test_dm_removes_k_samples(self, data):
        for seed in SEEDS:
            mutated = SourceMutationService.mutate_data(data, DataOp(DataOpKind.DM, ratio=0.03, seed=seed))
            assert len(mutated) == 97
            assert not (Counter(mutated.sample_keys()) - Counter(data.sample_keys()))

    def test_df_is_a_permutation(self, data):
        for seed in SEEDS:
            mutated = SourceMutationService.mutate_data(data, DataOp(DataOpKind.DF, seed=seed))
            assert Counter(mutated.sample_keys()) == Counter(data.sample_keys())

    def test_np_perturbs_at_most_k_rows(self, data):
        for seed in SEEDS:
            op = DataOp(DataOpKind.NP, ratio=0.05, seed=seed, noise_sigma=0.2)
            mutated = SourceMutationService.mutate_data(data, op)
            changed = np.any(mutated.features != data.features, axis=1)
            assert np.count_nonzero(changed) <= 5
            assert mutated.labels.tobytes() == data.labels.tobytes()
            assert mutated.features.min() >= 0.0 and mutated.features.max() <= 1.0

    def test_local_scope_touches_one_class(self, data):
        for seed in range(20):
            mutated = SourceMutationService.mutate_data(
                data, DataOp(DataOpKind.LE, Scope.LOCAL, ratio=0.2, seed=seed, class_id=2))
            changed = np.flatnonzero(mutated.labels != data.labels)
            assert len(changed) == 5
            assert set(data.labels[changed].tolist()) == {2}

    def test_local_shuffle_moves_only_class_positions(self, data):
        mutated = SourceMutationService.mutate_data(data, DataOp(DataOpKind.DF, Scope.LOCAL, seed=3, class_id=1))
        other = data.labels != 1
        assert mutated.features[other].tobytes() == data.features[other].tobytes()

    def test_dm_refuses_to_delete_a_class(self):
        data = Dataset(np.zeros((5, 2)), [0, 1, 1, 1, 1], 2)
        with pytest.raises(ClassExhaustedError):
            SourceMutationService.mutate_data(data, DataOp(DataOpKind.DM, Scope.LOCAL, ratio=1.0, class_id=0))

    def test_same_seed_same_result(self, data):
        op = DataOp(DataOpKind.NP, ratio=0.1, seed=42, noise_sigma=0.1)
        first = SourceMutationService.mutate_data(data, op)
        second = SourceMutationService.mutate_data(data, op)
        assert first.features.tobytes() == second.features.tobytes()

    def test_op_validation(self):
        with pytest.raises(ValueError):
            DataOp(DataOpKind.DR, ratio=0.0)
        with pytest.raises(ValueError):
            DataOp(DataOpKind.DR, Scope.LOCAL)
        with pytest.raises(ValueError):
            DataOp(DataOpKind.NP)


class TestProgramOperators:

    @pytest.fixture
    def spec(self) -> ModelSpec:
        return ModelSpec.mlp((4,), [6, 6], 3)

    def test_lr_removes_shape_preserving_layer(self, spec):
        mutated = SourceMutationService.mutate_program(spec, ProgramOp(ProgramOpKind.LR))
        assert len(mutated.layers) == 2
        assert mutated.layer_shapes()[-1] == (3,)

    def test_lr_without_eligible_layer(self):
        with pytest.raises(NoEligibleTargetError):
            SourceMutationService.mutate_program(ModelSpec.mlp((4,), [8, 6], 3), ProgramOp(ProgramOpKind.LR))

    def test_afr_removes_activation(self, spec):
        mutated = SourceMutationService.mutate_program(spec, ProgramOp(ProgramOpKind.AFR_S, target=0))
        assert mutated.layers[0].activation == ActivationKind.IDENTITY
        assert mutated.layers[1:] == spec.layers[1:]

    def test_la_candidates_all_shape_check(self, spec):
        for seed in range(30):
            mutated = SourceMutationService.mutate_program(spec, ProgramOp(ProgramOpKind.LA_S, seed=seed))
            assert len(mutated.layers) == len(spec.layers) + 1

    def test_la_on_identity_layer_offers_relu(self):
        spec = ModelSpec((4,), (LayerSpec.dense(4, 5), LayerSpec.dense(5, 3, ActivationKind.SOFTMAX)), 3)
        inserted = [layer for _, layer in SourceMutationService.program_candidates(spec, ProgramOpKind.LA_S)]
        assert LayerSpec.activation_layer(ActivationKind.RELU) in inserted

    @pytest.fixture
    def relu_spec(self) -> ModelSpec:
        # Dense(4,6)+ReLU -> Dense(6,5)+ReLU -> ReLU -> Dense(5,3)+Softmax
        return ModelSpec((4,), (LayerSpec.dense(4, 6, ActivationKind.RELU), LayerSpec.dense(6, 5, ActivationKind.RELU),
                                LayerSpec.activation_layer(ActivationKind.RELU),
                                LayerSpec.dense(5, 3, ActivationKind.SOFTMAX)), 3)

    def test_la_duplicating_relu_is_forward_equal(self, relu_spec):
        model = random_model(relu_spec, seed=5)
        mutated = SourceMutationService.mutate_program(relu_spec, ProgramOp(ProgramOpKind.LA_S, target=2))
        assert mutated.layers[3] == LayerSpec.activation_layer(ActivationKind.RELU)
        params = list(model.params)
        params.insert(3, None)
        batch = np.random.default_rng(6).normal(size=(16, 4)).astype(np.float32)
        np.testing.assert_array_equal(ForwardService.forward(TrainedModel(mutated, params), batch),
                                      ForwardService.forward(model, batch))

    def test_lr_undoes_added_layer(self, relu_spec):
        added = SourceMutationService.mutate_program(relu_spec, ProgramOp(ProgramOpKind.LA_S, target=2))
        for seed in range(10):
            restored = SourceMutationService.mutate_program(added, ProgramOp(ProgramOpKind.LR, target=3, seed=seed))
            assert restored == relu_spec

    def test_lr_removes_standalone_relu(self, relu_spec):
        for seed in range(20):
            mutated = SourceMutationService.mutate_program(relu_spec, ProgramOp(ProgramOpKind.LR, seed=seed))
            assert mutated == relu_spec.without_layer(2)
            assert [layer.kind for layer in mutated.layers].count(LayerKind.ACTIVATION) == 0

    def test_la_never_touches_output(self, spec):
        last = len(spec.layers) - 1
        for kind in ProgramOpKind:
            assert all(index < last for index, _ in SourceMutationService.program_candidates(spec, kind))


class TestGeneration:

    def test_plan_jobs(self, data):
        spec = ModelSpec((3,), (LayerSpec.dense(3, 4, ActivationKind.RELU),
                                LayerSpec.dense(4, 4, ActivationKind.RELU),
                                LayerSpec.dense(4, 4, ActivationKind.SOFTMAX)), 4)
        jobs = SourceMutationService.plan_jobs(data, spec, budget=4, seed=1)
        ids = [job[0] for job in jobs]
        assert len(ids) == len(set(ids))
        for kind in DataOpKind:
            ops = [op for _, op, _ in jobs if op.kind == kind]
            assert len(ops) == 4
            assert [op.scope for op in ops].count(Scope.LOCAL) == 2
        lr = [op for _, op, _ in jobs if op.kind == ProgramOpKind.LR]
        assert len(lr) == 1

    def test_generate_and_retrain(self, blobs):
        spec = ModelSpec.mlp((4,), [5, 5], 3)
        service = SourceMutationService()
        records = service.generate_source_mutants(
            blobs, spec, TrainConfig(epochs=2, batch_size=20, seed=1), budget=1, ratio=0.05, seed=3,
            parent_checksum="abc", data_operators=[DataOpKind.DR, DataOpKind.NP],
            program_operators=[ProgramOpKind.LR, ProgramOpKind.AFR_S])
        assert [r.operator for r in records] == ["DR", "NP", "LR", "AFR_s"]
        assert all(r.ok and r.level == MutationLevel.SOURCE and r.parent_checksum == "abc" for r in records)
        lr = records[2]
        assert len(lr.model.spec.layers) == 2
        assert not any(layer.kind == LayerKind.ACTIVATION for layer in lr.model.spec.layers)
        assert service.failures == []

    def test_generation_is_deterministic(self, blobs):
        spec = ModelSpec.mlp((4,), [5], 3)
        kwargs = dict(budget=2, ratio=0.05, seed=8, data_operators=[DataOpKind.LE], program_operators=[])
        cfg = TrainConfig(epochs=1, batch_size=30, seed=2)
        first = SourceMutationService().generate_source_mutants(blobs, spec, cfg, **kwargs)
        second = SourceMutationService().generate_source_mutants(blobs, spec, cfg, **kwargs)
        assert [r.checksum for r in first] == [r.checksum for r in second]

    def test_empty_budget(self, blobs):
        records = SourceMutationService().generate_source_mutants(
            blobs, ModelSpec.mlp((4,), [5], 3), TrainConfig(epochs=1), budget=0)
        assert records == []
