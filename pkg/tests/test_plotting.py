from zkcollide.ansatz import ModulationState
from zkcollide.modulation import ModulationRecord
from zkcollide.plotting import plot_collision, plot_interaction_plateau, plot_phase_portrait
from zkcollide.z_dynamics import phase_portrait

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _is_png(path) -> bool:
    return path.read_bytes()[:8] == PNG_SIGNATURE


def test_phase_portrait_figure(model, tmp_path) -> None:
    path = plot_phase_portrait(phase_portrait(model, n=21, t_half=5.0), tmp_path / "figs" / "portrait.png")
    assert _is_png(path)


def test_interaction_figure(table, tmp_path) -> None:
    assert _is_png(plot_interaction_plateau(table, tmp_path / "plateau.png"))


def test_collision_figure_without_reference(tmp_path) -> None:
    records = [
        ModulationRecord(
            t=t,
            gamma=ModulationState(z1=5.0 + t, z2=-5.0 - t, mu1=0.01 * t, mu2=-0.01 * t),
            eps_h1=0.0 if t == 0 else 1e-4,
            eps_l2=0.0,
            ortho_residuals=(0.0,) * 6,
            f_plus=0.0,
            f_minus=0.0,
            k1=0.0,
            k2=0.0,
        )
        for t in (-1.0, 0.0, 1.0)
    ]
    assert _is_png(plot_collision(records, None, tmp_path / "collision.png"))
