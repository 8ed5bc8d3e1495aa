import pytest

import accept_helpers


@pytest.fixture(scope="session")
def trained_models():
    """(base, refiner, inpainter), trained once and cached on disk."""
    bundles = None
    models = {}
    for kind in ("base", "refiner", "inpainter"):
        if not accept_helpers.cache_path(kind).exists() and bundles is None:
            bundles = accept_helpers.training_bundles()
        models[kind] = accept_helpers.load_or_train(kind, bundles)
    return models["base"], models["refiner"], models["inpainter"]


@pytest.fixture(scope="session")
def specular_eval_bundles():
    return accept_helpers.specular_bundles(30)


@pytest.fixture(scope="session")
def lambertian_eval_bundles():
    return accept_helpers.lambertian_bundles(30)
