import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from chemrl import policy as P
from chemrl.batch import sequence_log_prob, step_log_probs_numpy
from chemrl.env import (
    PREFIX, SCAFFOLD, PromptSpec, PromptTokenUnknown, SpliceProducesUntokenizableString, decorate_scaffold,
    rollout, splice,
)
from chemrl.vocab import (
    EOS, GO, PAD, EmptyCorpus, TokenizeError, UnknownId, UnknownToken, Vocabulary, build_vocabulary, tokenize,
)
from conftest import make_policy


@pytest.mark.parametrize("text,tokens", [
    ("CClBr", ["C", "Cl", "Br"]),
    ("[nH]", ["[nH]"]),
    ("C%12C", ["C", "%12", "C"]),
    ("c1cc[nH]c1", ["c", "1", "c", "c", "[nH]", "c", "1"]),
    ("CC(=O)[O-]", ["C", "C", "(", "=", "O", ")", "[O-]"]),
])
def test_tokenize_examples(text, tokens):
    assert tokenize(text) == tokens


@pytest.mark.parametrize("text,kind", [("C[nH", "UnterminatedBracket"), ("C%1", "MalformedPercent"),
                                       ("C%a1", "MalformedPercent"), ("C]C", "UnterminatedBracket")])
def test_tokenize_errors(text, kind):
    with pytest.raises(TokenizeError) as info:
        tokenize(text)
    assert info.value.kind == kind


def test_build_vocabulary():
    v = build_vocabulary(["CC", "CO"])
    assert len(v) == 5
    assert set(v.tokens) == {"C", "O", GO, EOS, PAD}
    assert build_vocabulary(["CO", "CC"]).tokens == v.tokens
    assert "[nH]" in build_vocabulary(["c1cc[nH]c1"])
    with pytest.raises(EmptyCorpus):
        build_vocabulary([])


def test_vocabulary_invariants(small_vocab):
    v = small_vocab
    assert sorted(v.index.values()) == list(range(len(v)))
    assert len({v.go, v.eos, v.pad}) == 3
    assert v.num_actions == len(v) - 2


def test_encode_decode(small_vocab):
    v = small_vocab
    assert v.decode([v.go, v.index["c"], v.eos]) == "c"
    with pytest.raises(UnknownToken):
        v.encode(["Xe"])
    with pytest.raises(UnknownId):
        v.decode([len(v)])


def test_vocabulary_file_round_trip(tmp_path, small_vocab):
    small_vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").tokens == small_vocab.tokens


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_encode_decode_round_trip(data):
    v = build_vocabulary(["CCO", "c1ccccc1", "CCl", "C[nH+]", "CBr"])
    plain = [i for i in range(len(v)) if i not in v.special_ids]
    ids = data.draw(st.lists(st.sampled_from(plain), max_size=20))
    assert v.encode(v.decode_tokens(ids)) == ids


def _biased_policy(vocab, token_id, value):
    params = P.zero_params(P.PolicyConfig(len(vocab), 4, 4, masked_ids=(vocab.go, vocab.pad)))
    with torch.no_grad():
        params["proj.b"][token_id] = value
    return params


def test_certain_eos_policy(small_vocab):
    v = small_vocab
    trajs = rollout(_biased_policy(v, v.eos, 1e3), v, 8, 10, np.random.default_rng(0))
    for tr in trajs:
        assert tr.tokens.tolist() == [v.eos]
        assert not tr.truncated
        assert tr.log_prob == 0.0


def test_uniform_policy_log_probability(small_vocab):
    v = small_vocab
    params = P.zero_params(P.PolicyConfig(len(v), 4, 4, masked_ids=(v.go, v.pad)))
    for tr in rollout(params, v, 20, 12, np.random.default_rng(1)):
        L = tr.num_actions
        assert tr.log_prob == pytest.approx(L * math.log(1 / v.num_actions), abs=1e-12)


def test_never_eos_truncates(small_vocab):
    v = small_vocab
    for tr in rollout(_biased_policy(v, v.eos, -1e3), v, 8, 3, np.random.default_rng(0)):
        assert len(tr.tokens) == 3
        assert tr.truncated
        assert tr.tokens[-1] != v.eos


def test_rollout_log_probs_match_reevaluation(small_vocab, small_policy):
    v = small_vocab
    trajs = rollout(small_policy, v, 32, 15, np.random.default_rng(2))
    for tr in trajs:
        assert np.all(tr.log_probs <= 0)
        (fresh,) = step_log_probs_numpy(small_policy, tr, v)
        np.testing.assert_allclose(fresh, tr.log_probs, rtol=0, atol=1e-9)
        assert sequence_log_prob(small_policy, tr, v) == pytest.approx(tr.log_prob, abs=1e-9)


def test_non_truncated_trajectories_end_with_eos(small_vocab, small_policy):
    v = small_vocab
    for tr in rollout(small_policy, v, 64, 15, np.random.default_rng(3)):
        inner = tr.tokens[:-1].tolist()
        assert not set(inner) & set(v.special_ids)
        if not tr.truncated:
            assert tr.tokens[-1] == v.eos


def test_rollout_is_deterministic(small_vocab, small_policy):
    a = rollout(small_policy, small_vocab, 16, 15, np.random.default_rng(9))
    b = rollout(small_policy, small_vocab, 16, 15, np.random.default_rng(9))
    assert [t.tokens.tobytes() + t.log_probs.tobytes() for t in a] == \
           [t.tokens.tobytes() + t.log_probs.tobytes() for t in b]


def test_prefix_prompt_is_teacher_forced(small_vocab, small_policy):
    v = small_vocab
    spec = PromptSpec(PREFIX, prefix="c1cc")
    for tr in rollout(small_policy, v, 10, 8, np.random.default_rng(4), spec):
        assert tr.smiles.startswith("c1cc")
        assert tr.actionable[:4].tolist() == [False] * 4
        assert tr.actionable[4:].all()
        assert tr.num_actions == len(tr.tokens) - 4
        (fresh,) = step_log_probs_numpy(small_policy, tr, v)
        np.testing.assert_allclose(fresh, tr.log_probs, atol=1e-9)


def test_prefix_with_unknown_token(small_vocab, small_policy):
    with pytest.raises(PromptTokenUnknown):
        rollout(small_policy, small_vocab, 2, 5, np.random.default_rng(0), PromptSpec(PREFIX, prefix="CBr"))


def test_splice():
    assert splice("c1ccccc1*", ["C"]) == "c1ccccc1C"
    assert splice("*c1ccccc1*", ["O", "N"]) == "Oc1ccccc1N"


def test_scaffold_single_marker(small_vocab):
    v = small_vocab
    params = _biased_policy(v, v.index["C"], 1e3)
    spec = PromptSpec(SCAFFOLD, scaffold="c1ccccc1*", prompts=["c1ccccc1"])
    (tr,) = decorate_scaffold(params, v, spec, 1, 1, np.random.default_rng(0))
    assert tr.smiles == "c1ccccc1C"


def test_scaffold_empty_completion_flagged(small_vocab):
    v = small_vocab
    spec = PromptSpec(SCAFFOLD, scaffold="c1ccccc1*", prompts=["c1ccccc1"])
    (tr,) = decorate_scaffold(_biased_policy(v, v.eos, 1e3), v, spec, 1, 5, np.random.default_rng(0))
    assert tr.smiles == "c1ccccc1"
    assert tr.empty_completion


def test_scaffold_two_markers_left_to_right(small_vocab):
    # deterministic policy: always 'C', one sampled action per attachment
    v = small_vocab
    params = _biased_policy(v, v.index["C"], 1e3)
    spec = PromptSpec(SCAFFOLD, scaffold="*c1ccccc1*", prompts=["", "{0}c1ccccc1"])
    (tr,) = decorate_scaffold(params, v, spec, 1, 1, np.random.default_rng(0))
    assert tr.smiles == "Cc1ccccc1C"
    assert tr.prompts == ["", "Cc1ccccc1"]
    assert len(tr.segments()) == 2
    assert tr.num_actions == 2


def test_scaffold_requires_marker(small_vocab, small_policy):
    with pytest.raises(ValueError):
        rollout(small_policy, small_vocab, 1, 5, np.random.default_rng(0), PromptSpec(SCAFFOLD, scaffold="CC"))


def test_splice_must_tokenize(small_vocab):
    v = small_vocab
    spec = PromptSpec(SCAFFOLD, scaffold="C[*", prompts=["C"])
    with pytest.raises(SpliceProducesUntokenizableString):
        decorate_scaffold(_biased_policy(v, v.eos, 1e3), v, spec, 1, 3, np.random.default_rng(0))


def test_reward_assigned_once(small_vocab, small_policy):
    (tr,) = rollout(small_policy, small_vocab, 1, 5, np.random.default_rng(0))
    tr.assign_reward(0.5)
    with pytest.raises(RuntimeError):
        tr.assign_reward(0.7)
