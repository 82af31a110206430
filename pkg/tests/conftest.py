import numpy as np
import pytest

from modcap.model import ModelConfig, init_params


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        vocab_size=11,
        feature_dim=6,
        n_objects=3,
        module_sizes=(2, 3, 2, 2, 2),
        hidden_size=8,
        embed_size=5,
    )
    base.update(overrides)
    return ModelConfig(**base)


def randomize(params, seed=0, scale=0.5):
    """Wider-than-default weights so gradients are not all tiny."""
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.data = rng.uniform(-scale, scale, p.shape)
    return params


@pytest.fixture
def tiny():
    cfg = tiny_config()
    return cfg, init_params(cfg, seed=0)


def toy_gradcheck_instance(seed=1, scale=0.5):
    """One scene with two regions and a three-step target ("two cats" + eos),
    desk widths except D_h = 8."""
    from modcap.model import ModelConfig
    from modcap.scenes import SceneConfig, generate_scene
    from modcap.supervision import collate, make_examples
    from modcap.vocab import build_vocabulary

    sc = SceneConfig(n_regions=2, max_objects=1, max_count=2)
    scene = generate_scene(3, sc)
    scene.references = [["two", "cats"]]
    lex = sc.lexicon()
    vocab = build_vocabulary(scene.references, 1, lex.all_tokens() + [o + "s" for o in lex.object_set])
    cfg = ModelConfig(len(vocab), sc.feature_dim, lex.n_objects, lex.module_sizes, hidden_size=8, embed_size=8)
    params = randomize(init_params(cfg, seed), seed=seed, scale=scale)
    batch = collate(make_examples([scene], vocab, lex), vocab)
    return cfg, params, batch


# central differences on a loss of magnitude ~50 carry ~1e-9 absolute rounding
# noise; below this gradient size entries are compared absolutely
END_TO_END_FLOOR = 1e-4


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
