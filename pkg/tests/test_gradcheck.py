import numpy as np

import climdown.autodiff as ad
from climdown.gradcheck import TOLERANCE, layer_checks, unet_check
from climdown.nn import Adam, Conv2d, ParamStore
from climdown.rng import substream


def test_every_layer_passes_fd():
    for name, err in layer_checks(seed=0):
        assert err < TOLERANCE, f"{name}: {err}"


def test_small_unet_passes_fd():
    name, err = unet_check(seed=0)
    assert err < TOLERANCE, f"worst {name}: {err}"


def test_two_layer_conv_net_float32_mode():
    # at float32 the same analytic gradients match FD to 1e-3
    rng = np.random.default_rng(4)
    store = ParamStore(dtype=np.float32)
    c1 = Conv2d(store, "c1", 2, 4, rng=substream(1))
    c2 = Conv2d(store, "c2", 4, 1, rng=substream(2))
    x = rng.standard_normal((2, 6, 6, 2)).astype(np.float32)
    proj = ad.Tensor(rng.standard_normal((2, 6, 6, 1)).astype(np.float32))

    def loss_value():
        return float(ad.sum_(ad.mul(c2(ad.silu(c1(ad.Tensor(x)))), proj)).data)

    loss = ad.sum_(ad.mul(c2(ad.silu(c1(ad.Tensor(x)))), proj))
    loss.backward()
    for name, p in store.items():
        analytic = p.grad.reshape(-1)
        scale = max(np.abs(analytic).max(), 1e-6)
        flat = p.data.reshape(-1)
        h = np.float32(max(np.abs(p.data).max(), 1.0) * 5e-3)
        idx = np.random.default_rng(5).choice(flat.size, size=min(6, flat.size),
                                              replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_value()
            flat[i] = orig - h
            fm = loss_value()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * float(h))
            assert abs(analytic[i] - fd) / max(scale, abs(fd)) < 1e-3, name
