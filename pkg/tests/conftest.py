import pytest

from reasonmix.toy import ModelConfig, init_model, make_synthetic_tasks, train


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(d_model=32, n_heads=2, n_layers=2, max_seq_len=48)


@pytest.fixture(scope="session")
def tiny_corpus():
    return make_synthetic_tasks("multi-digit-add", difficulty_levels=2, per_level=120, seed=11)


@pytest.fixture(scope="session")
def tiny_eval_records():
    return make_synthetic_tasks("multi-digit-add", difficulty_levels=2, per_level=16, seed=97)


@pytest.fixture(scope="session")
def tiny_base(tiny_config, tiny_corpus):
    return train(
        init_model(tiny_config, seed=1), tiny_corpus, "mixed",
        epochs=9999, lr=0.5, seed=2, max_steps=900,
    )


@pytest.fixture(scope="session")
def tiny_instruct(tiny_base, tiny_corpus):
    return train(tiny_base, tiny_corpus, "instruct", epochs=9999, lr=0.2, seed=3, max_steps=250)


@pytest.fixture(scope="session")
def tiny_thinking(tiny_base, tiny_corpus):
    return train(tiny_base, tiny_corpus, "thinking", epochs=9999, lr=0.2, seed=4, max_steps=250)
