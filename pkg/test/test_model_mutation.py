import numpy as np
import pytest

from entity.LayerKind import ActivationKind, LayerKind
from entity.ModelSpec import LayerSpec, ModelSpec
from entity.MutationOperator import ModelOp, ModelOpKind
from entity.TrainedModel import TrainedModel
from model_factory import random_model
from service.engine.ForwardService import ForwardService
from service.mutation.ModelMutationService import ModelMutationService
from util.Errors import NoEligibleTargetError

SEEDS = range(200)


@pytest.fixture
def service() -> ModelMutationService:
    return ModelMutationService()


def relu_layer_spec() -> ModelSpec:
    # Dense(4,5)+ReLU -> ReLU -> Dense(5,3)+Softmax
    return ModelSpec((4,), (LayerSpec.dense(4, 5, ActivationKind.RELU), LayerSpec.activation_layer(ActivationKind.RELU),
                            LayerSpec.dense(5, 3, ActivationKind.SOFTMAX)), 3)


def changed_weights(before, after):
    return sum(int(np.count_nonzero(a[0] != b[0])) for a, b in zip(before.params, after.params) if a is not None)


class TestWeightLevel:

    def test_gf_zero_sigma_is_identity(self, service, mlp_model):
        for seed in SEEDS:
            assert service.mutate_gf(mlp_model, 1.0, sigma=0.0, seed=seed).bitwise_equal(mlp_model)

    def test_gf_changes_selected_weights_only(self, service, mlp_model):
        total = sum(mlp_model.weight(i).size for i in mlp_model.spec.parameterized_layers())
        for seed in SEEDS:
            mutant = service.mutate_gf(mlp_model, 0.1, sigma=0.5, seed=seed)
            assert changed_weights(mlp_model, mutant) <= int(np.ceil(0.1 * total))
            for a, b in zip(mlp_model.params, mutant.params):
                assert a[1].tobytes() == b[1].tobytes()

    def test_gf_three_sigma_band(self, service):
        model = random_model(ModelSpec.mlp((40,), [100], 10), seed=0)
        sigma = 0.1
        mutant = service.mutate_gf(model, 1.0, sigma=sigma, seed=1)
        deltas = np.concatenate([(mutant.weight(i).astype(np.float64) - model.weight(i)).ravel()
                                 for i in model.spec.parameterized_layers()])
        inside = np.mean(np.abs(deltas) <= 3 * sigma)
        band = 0.9973
        assert abs(inside - band) <= 3 * np.sqrt(band * (1 - band) / deltas.size)

    def test_gf_default_sigma(self, service, mlp_model):
        outcome = service.apply(mlp_model, ModelOp(ModelOpKind.GF, ratio=0.5, seed=3))
        weights = np.concatenate([mlp_model.weight(i).ravel().astype(np.float64)
                                  for i in mlp_model.spec.parameterized_layers()])
        assert outcome.details['sigma'] == pytest.approx(0.5 * weights.std())


class TestNeuronLevel:

    def test_nai_twice_is_identity(self, service, mlp_model, cnn_model):
        for model in (mlp_model, cnn_model):
            for seed in SEEDS:
                twice = service.mutate_nai(service.mutate_nai(model, 0.3, seed), 0.3, seed)
                assert twice.bitwise_equal(model)

    def test_nai_negates_pre_activation(self, service, mlp_model):
        batch = np.random.default_rng(0).random((4, 4)).astype(np.float32)
        mutant = service.mutate_nai(mlp_model, 1.0, seed=0)
        before = ForwardService.layer_traces(mlp_model, batch)[0].pre_activation
        after = ForwardService.layer_traces(mutant, batch)[0].pre_activation
        np.testing.assert_allclose(after, -before, rtol=1e-6)

    def test_ns_twice_is_identity(self, service, mlp_model, cnn_model):
        for model in (mlp_model, cnn_model):
            for seed in SEEDS:
                twice = service.mutate_ns(service.mutate_ns(model, 0.5, seed), 0.5, seed)
                assert twice.bitwise_equal(model)

    def test_ns_swaps_within_a_layer(self, service, mlp_model):
        outcome = service.apply(mlp_model, ModelOp(ModelOpKind.NS, ratio=0.2, seed=4))
        for layer, first, second in outcome.details['pairs']:
            np.testing.assert_array_equal(outcome.model.weight(layer)[first], mlp_model.weight(layer)[second])
            np.testing.assert_array_equal(outcome.model.bias(layer)[second], mlp_model.bias(layer)[first])

    def test_ws_preserves_incoming_multisets(self, service, mlp_model, cnn_model):
        for model in (mlp_model, cnn_model):
            for seed in SEEDS:
                mutant = service.mutate_ws(model, 0.3, seed)
                for index in model.spec.parameterized_layers():
                    before = model.weight(index).reshape(model.weight(index).shape[0], -1)
                    after = mutant.weight(index).reshape(before.shape)
                    np.testing.assert_array_equal(np.sort(before, axis=1), np.sort(after, axis=1))
                    assert model.bias(index).tobytes() == mutant.bias(index).tobytes()

    def test_neb_zeroes_targeted_columns(self, service, mlp_model):
        for seed in SEEDS:
            outcome = service.apply(mlp_model, ModelOp(ModelOpKind.NEB, ratio=0.2, seed=seed))
            expected = mlp_model.params_copy()
            for layer, neuron in outcome.details['blocked']:
                expected[layer + 1][0][:, neuron] = 0.0
            for mine, theirs in zip(outcome.model.params, expected):
                assert mine[0].tobytes() == theirs[0].tobytes()

    def test_neb_never_blocks_output_neurons(self, service, mlp_model):
        last = mlp_model.spec.output_index
        for seed in SEEDS:
            outcome = service.apply(mlp_model, ModelOp(ModelOpKind.NEB, ratio=0.5, seed=seed))
            assert all(layer != last for layer, _ in outcome.details['blocked'])

    def test_blocked_neuron_bias_has_no_effect(self, service, mlp_model, cnn_model):
        rng = np.random.default_rng(5)
        for model in (mlp_model, cnn_model):
            batch = rng.random((8,) + model.spec.input_shape).astype(np.float32)
            for seed in range(50):
                outcome = service.apply(model, ModelOp(ModelOpKind.NEB, ratio=0.3, seed=seed))
                params = outcome.model.params_copy()
                for layer, neuron in outcome.details['blocked']:
                    params[layer][1][neuron] += 3.0
                perturbed = outcome.model.with_params(params)
                assert ForwardService.forward(perturbed, batch).tobytes() == \
                    ForwardService.forward(outcome.model, batch).tobytes()

    def test_neb_on_conv_blocks_a_flattened_block(self, service, cnn_model):
        outcome = service.apply(cnn_model, ModelOp(ModelOpKind.NEB, ratio=0.01, seed=0))
        (layer, neuron), = outcome.details['blocked']
        if layer == 0:
            dense = outcome.model.weight(3)
            assert np.all(dense[:, neuron * 4:(neuron + 1) * 4] == 0)

    def test_zero_ratio_is_identity(self, service, mlp_model):
        assert service.mutate_ws(mlp_model, 0.0, seed=1).bitwise_equal(mlp_model)
        assert service.mutate_nai(mlp_model, 0.0, seed=1).bitwise_equal(mlp_model)

    def test_operators_do_not_touch_the_original(self, service, mlp_model):
        snapshot = [None if p is None else (p[0].copy(), p[1].copy()) for p in mlp_model.params]
        for kind in (ModelOpKind.GF, ModelOpKind.WS, ModelOpKind.NEB, ModelOpKind.NAI, ModelOpKind.NS):
            service.apply(mlp_model, ModelOp(kind, ratio=1.0, seed=0))
        for kept, now in zip(snapshot, mlp_model.params):
            assert kept[0].tobytes() == now[0].tobytes() and kept[1].tobytes() == now[1].tobytes()


class TestLayerLevel:

    def test_ld_removes_shape_preserving_layer(self, service, mlp_model):
        mutant = service.mutate_ld(mlp_model, seed=0)
        assert len(mutant.spec.layers) == 2
        assert mutant.spec.layer_shapes()[-1] == (3,)
        assert mutant.weight(1).tobytes() == mlp_model.weight(2).tobytes()

    def test_la_duplicates_layer(self, service, mlp_model):
        mutant = service.mutate_la(mlp_model, target_layer=1)
        assert len(mutant.spec.layers) == 4
        assert mutant.weight(2).tobytes() == mutant.weight(1).tobytes()

    def test_la_inserts_relu_after_resizing_layer(self, service, mlp_model):
        mutant = service.mutate_la(mlp_model, target_layer=0)
        assert mutant.spec.layers[1] == LayerSpec.activation_layer(ActivationKind.RELU)
        assert mutant.params[1] is None
        assert mutant.param_count() == mlp_model.param_count()
        batch = np.random.default_rng(0).normal(size=(8, 4)).astype(np.float32)
        # Dense(4,5) 已带 ReLU，再接一个 ReLU 输出不变
        np.testing.assert_array_equal(ForwardService.forward(mutant, batch), ForwardService.forward(mlp_model, batch))

    def test_la_duplicated_relu_activation_is_bitwise_equal(self, service):
        model = random_model(relu_layer_spec(), seed=3)
        mutant = service.mutate_la(model, target_layer=1)
        assert [layer.kind for layer in mutant.spec.layers].count(LayerKind.ACTIVATION) == 2
        batch = np.random.default_rng(1).normal(size=(16, 4)).astype(np.float32)
        np.testing.assert_array_equal(ForwardService.forward(mutant, batch), ForwardService.forward(model, batch))

    def test_la_duplicated_dense_adds_its_parameters(self, service, mlp_model):
        mutant = service.mutate_la(mlp_model, target_layer=1)
        assert mutant.param_count() == mlp_model.param_count() + mlp_model.spec.layers[1].param_count()

    def test_ld_of_relu_on_nonnegative_inputs(self, service):
        model = random_model(relu_layer_spec(), seed=4)
        mutant = service.mutate_ld(model, target_layer=1)
        assert len(mutant.spec.layers) == 2
        batch = np.random.default_rng(2).normal(size=(16, 4)).astype(np.float32)
        # 被删除的 ReLU 层之前是 Dense+ReLU，其输入恒非负
        np.testing.assert_array_equal(ForwardService.forward(mutant, batch), ForwardService.forward(model, batch))

    def test_afr_passes_negative_pre_activations(self, service):
        spec = ModelSpec((2,), (LayerSpec.dense(2, 2, ActivationKind.RELU),
                                LayerSpec.dense(2, 2, ActivationKind.SOFTMAX)), 2)
        eye = np.eye(2, dtype=np.float32)
        model = TrainedModel(spec, [(-eye, np.zeros(2, np.float32)), (eye, np.zeros(2, np.float32))])
        mutant = service.mutate_afr(model, target_layer=0)
        batch = np.array([[1.0, 2.0], [0.5, 3.0]], dtype=np.float32)
        np.testing.assert_array_equal(ForwardService.layer_traces(model, batch)[0].outputs, np.zeros((2, 2)))
        np.testing.assert_array_equal(ForwardService.layer_traces(mutant, batch)[0].outputs, -batch)

    def test_default_mlp_has_layer_addition_mutants(self, service):
        model = random_model(ModelSpec.mlp((4,), [6, 5], 3), seed=0)
        assert service.eligible_layers(model, ModelOpKind.LD) == []
        assert service.eligible_layers(model, ModelOpKind.LA_M) == [0, 1]
        records = service.generate_model_mutants(model, 0, layer_budget=2, seed=0, operators=[ModelOpKind.LA_M])
        assert len(records) == 2
        for record in records:
            assert record.params['inserted'] == 'relu'
            inserted = record.model.spec.layers[record.params['target_layer'] + 1]
            assert inserted == LayerSpec.activation_layer(ActivationKind.RELU)

    def test_afr_sets_identity(self, service, mlp_model):
        mutant = service.mutate_afr(mlp_model, target_layer=1)
        assert mutant.spec.layers[1].activation == ActivationKind.IDENTITY
        assert mutant.weight(1).tobytes() == mlp_model.weight(1).tobytes()

    def test_no_eligible_layer(self, service):
        model = random_model(ModelSpec.mlp((4,), [6, 5], 3), seed=0)
        with pytest.raises(NoEligibleTargetError):
            service.mutate_ld(model)
        with pytest.raises(NoEligibleTargetError):
            service.mutate_la(model, target_layer=2)

    def test_ineligible_target(self, service, mlp_model):
        with pytest.raises(NoEligibleTargetError):
            service.mutate_ld(mlp_model, target_layer=0)

    def test_all_layer_mutants_shape_check(self, service, mlp_model, cnn_model):
        batch_shapes = {id(mlp_model): (2, 4), id(cnn_model): (2, 1, 6, 6)}
        for model in (mlp_model, cnn_model):
            for kind in (ModelOpKind.LD, ModelOpKind.LA_M, ModelOpKind.AFR_M):
                for index in service.eligible_layers(model, kind):
                    mutant = service.apply(model, ModelOp(kind, target_layer=index)).model
                    probs = ForwardService.forward(mutant, np.zeros(batch_shapes[id(model)], np.float32))
                    assert probs.shape == (2, 3)

    def test_op_validation(self):
        with pytest.raises(ValueError):
            ModelOp(ModelOpKind.LD, ratio=0.1)
        with pytest.raises(ValueError):
            ModelOp(ModelOpKind.WS)
        with pytest.raises(ValueError):
            ModelOp(ModelOpKind.WS, ratio=0.1, gf_sigma=1.0)


class TestGeneration:

    def test_counts_ids_and_distinctness(self, service, mlp_model):
        records = service.generate_model_mutants(mlp_model, budget_per_op=5, ratios=0.2, seed=1)
        ids = [r.mutant_id for r in records]
        assert len(ids) == len(set(ids))
        for kind in (ModelOpKind.GF, ModelOpKind.WS, ModelOpKind.NEB, ModelOpKind.NAI, ModelOpKind.NS):
            produced = sum(1 for r in records if r.operator == kind.value)
            assert produced + service.shortfalls.get(kind.value, 0) == 5
        assert all(not r.model.bitwise_equal(mlp_model) for r in records)
        assert sum(1 for r in records if r.operator == "LD") == 1

    def test_deterministic(self, mlp_model):
        first = ModelMutationService().generate_model_mutants(mlp_model, 3, 0.2, seed=7)
        second = ModelMutationService().generate_model_mutants(mlp_model, 3, 0.2, seed=7)
        assert [r.checksum for r in first] == [r.checksum for r in second]

    def test_empty_budget(self, service, mlp_model):
        assert service.generate_model_mutants(mlp_model, 0, layer_budget=0) == []

    def test_cnn_layer_kinds(self, service, cnn_model):
        records = service.generate_model_mutants(cnn_model, 2, 0.5, seed=0,
                                                 operators=[ModelOpKind.AFR_M, ModelOpKind.NEB])
        afr = [r for r in records if r.operator == "AFR_m"]
        assert afr and all(r.model.spec.layers[r.params['target_layer']].kind in (LayerKind.DENSE, LayerKind.CONV2D)
                           for r in afr)
