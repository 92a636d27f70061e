import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lsgan
from pausetts.adversarial import MultiLengthDiscriminator, WindowSpec, gan_losses, slice_windows


def gen(seed):
    return torch.Generator().manual_seed(seed)


def test_window_bounds_over_seeds():
    mel = torch.randn(10, 5)
    starts = set()
    for seed in range(1000):
        (w,) = slice_windows(mel, WindowSpec((4,)), gen(seed))
        assert w.real.shape == (4, 5)
        assert 0 <= w.start <= 6
        assert torch.equal(w.real, mel[w.start : w.start + 4])
        starts.add(w.start)
    assert starts == set(range(7))


def test_long_windows_skipped_and_forced_offset():
    mel = torch.randn(10, 5)
    assert slice_windows(mel, WindowSpec((32, 64, 96)), gen(0)) == []
    for seed in range(20):
        (w,) = slice_windows(mel, WindowSpec((10,)), gen(seed))
        assert w.start == 0


def test_paired_slicing_shares_offsets():
    real, fake = torch.randn(50, 4), torch.randn(50, 4)
    for w in slice_windows(real, WindowSpec((8, 16, 32)), gen(3), fake=fake):
        assert torch.equal(w.fake, fake[w.start : w.start + w.length])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 120), st.lists(st.integers(1, 100), min_size=1, max_size=4, unique=True), st.integers(0, 10**6))
def test_windows_never_exceed_length(T, lengths, seed):
    spec = WindowSpec(tuple(sorted(lengths)))
    windows = slice_windows(torch.zeros(T, 2), spec, gen(seed))
    assert [w.length for w in windows] == [L for L in spec.lengths if L <= T]
    for w in windows:
        assert w.start >= 0 and w.start + w.length <= T


def test_window_spec_validation():
    for bad in [(0, 4), (8, 4), (4, 4)]:
        with pytest.raises(ValueError):
            WindowSpec(bad)


def test_scores_finite_and_eval_deterministic():
    d = MultiLengthDiscriminator(12, [4, 8, 16], hidden=16).eval()
    for L in (1, 4, 8, 16, 40):
        w = torch.randn(L, 12)
        s = d.discriminate(w)
        assert s.dim() == 0 and torch.isfinite(s)
        assert torch.equal(s, d.discriminate(w))


def test_gan_loss_examples():
    d, g = gan_losses([1.0], [0.0])
    assert d.item() == 0.0 and g.item() == 0.5
    d, g = gan_losses([0.0], [1.0])
    assert d.item() == 1.0 and g.item() == 0.0
    with pytest.raises(ValueError):
        gan_losses([], [0.0])


@pytest.mark.parametrize("seed", range(10))
def test_gan_losses_match_oracle(seed):
    g = gen(seed)
    r, f = torch.randn(7, generator=g, dtype=torch.float64), torch.randn(5, generator=g, dtype=torch.float64)
    d_loss, g_loss = gan_losses(r, f)
    od, og = lsgan(r.tolist(), f.tolist())
    assert abs(d_loss.item() - od) < 1e-7 and abs(g_loss.item() - og) < 1e-7


def test_generator_gradient_reaches_fake_mel():
    d = MultiLengthDiscriminator(8, [4, 8], hidden=8)
    real = torch.randn(2, 20, 8)
    fake = torch.randn(2, 20, 8, requires_grad=True)
    mask = torch.ones(2, 20, dtype=torch.bool)
    placements = d.place_windows(mask, WindowSpec((4, 8)), gen(0))
    assert len(placements) == 4
    r, f = d.score_pairs(real, fake, placements)
    _, g_loss = gan_losses(r, f)
    g_loss.backward()
    assert fake.grad.abs().max() > 0


def test_placements_respect_utterance_lengths():
    d = MultiLengthDiscriminator(4, [4, 8])
    mask = torch.zeros(3, 12, dtype=torch.bool)
    mask[0, :12] = True
    mask[1, :5] = True
    mask[2, :2] = True
    placements = d.place_windows(mask, WindowSpec((4, 8)), gen(1))
    lengths = mask.sum(1).tolist()
    assert sorted((b, L) for b, L, _ in placements) == [(0, 4), (0, 8), (1, 4)]
    for b, L, s in placements:
        assert s + L <= lengths[b]
    r, f = d.score_pairs(torch.zeros(3, 12, 4), torch.zeros(3, 12, 4), [])
    assert r.numel() == 0 and f.numel() == 0


def test_discriminator_separates_constant_real_from_noise_fake():
    torch.manual_seed(0)
    d = MultiLengthDiscriminator(8, [4, 8], hidden=16)
    opt = torch.optim.AdamW(d.parameters(), lr=2e-3, betas=(0.8, 0.99))
    spec = WindowSpec((4, 8))
    real = torch.full((4, 24, 8), 0.5)
    mask = torch.ones(4, 24, dtype=torch.bool)
    for step in range(60):
        fake = torch.rand(4, 24, 8, generator=gen(1000 + step))
        placements = d.place_windows(mask, spec, gen(step))
        r, f = d.score_pairs(real, fake, placements)
        d_loss, _ = gan_losses(r, f)
        opt.zero_grad()
        d_loss.backward()
        opt.step()
    d.eval()
    with torch.no_grad():
        fake = torch.rand(4, 24, 8, generator=gen(7))
        r, f = d.score_pairs(real, fake, d.place_windows(mask, spec, gen(99)))
    assert r.mean() - f.mean() > 0
