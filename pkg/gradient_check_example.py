import numpy as np

from adv_tagger import CrfParams, NonFiniteError, grad_check, nll

TAGS = [0, 2, 1]

try:
    rng = np.random.default_rng(0)
    point = {
        "emissions": rng.normal(size=(3, 3)),
        "transitions": rng.normal(size=(3, 3)),
        "start": rng.normal(size=3),
        "stop": rng.normal(size=3),
    }

    def loss(x):
        return nll(x["emissions"], CrfParams(x["transitions"], x["start"], x["stop"]), TAGS)

    error = grad_check(loss, point)
    print(f"CRF NLL gradient check: max relative error {error:.2e}")
except NonFiniteError as e:
    print(f"Gradient check failed: {e}")
