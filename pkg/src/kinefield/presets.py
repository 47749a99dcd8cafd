"""Named scene and training configurations used by the CLI and the acceptance suite."""
from .scene import Keyframe, ObjectSpec, SceneConfig
from .objective import LossWeights
from .train import TrainConfig


def rigid_pair():
    """Two rigid 200-point balls under smooth rotation and translation, no noise."""
    return SceneConfig(T=30, objects=[
        ObjectSpec(n_points=200, center=(0.4, 0.0, 0.0), keyframes=[
            Keyframe(0, (0.0, 0.0, 0.1), (0.1, 0.0, 0.0)), Keyframe(29, (0.0, 0.0, 0.8), (0.4, 0.2, 0.0))]),
        ObjectSpec(n_points=200, center=(-0.4, 0.0, 0.0), keyframes=[
            Keyframe(0, (0.1, 0.0, 0.0), (0.0, -0.1, 0.05)), Keyframe(29, (0.6, 0.0, 0.0), (-0.3, 0.0, 0.2))]),
    ])


def standard():
    """Three objects whose motion phases (slide, rest, spin, tumble) differ in timing."""
    return SceneConfig(T=30, noise_std=0.001, objects=[
        ObjectSpec(n_points=150, center=(0.55, 0.0, 0.0), keyframes=[
            Keyframe(0, (0.0, 0.0, 0.0), (0.05, 0.0, 0.0)),
            Keyframe(10, (0.0, 0.0, 0.0), (0.35, 0.1, 0.0)),
            Keyframe(19, (0.0, 0.0, 0.0), (0.35, 0.1, 0.0)),
            Keyframe(29, (0.0, 0.0, 0.9), (0.35, 0.1, 0.0))]),
        ObjectSpec(n_points=150, center=(-0.3, 0.5, 0.0), residual_amplitude=0.01, keyframes=[
            Keyframe(0, (0.0, 0.0, 0.0), (0.0, 0.05, 0.0)),
            Keyframe(9, (0.0, 0.0, 0.0), (0.0, 0.05, 0.0)),
            Keyframe(19, (0.6, 0.0, 0.0), (-0.1, 0.25, 0.1)),
            Keyframe(29, (0.6, 0.0, 0.0), (-0.4, 0.25, 0.1))]),
        ObjectSpec(n_points=150, center=(-0.3, -0.5, 0.0), keyframes=[
            Keyframe(0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.05)),
            Keyframe(12, (0.0, 0.8, 0.0), (0.0, 0.0, 0.05)),
            Keyframe(21, (0.0, 0.8, 0.0), (0.0, -0.3, 0.05)),
            Keyframe(29, (0.0, 0.8, 0.0), (0.0, -0.3, 0.05))]),
    ])


SCENES = {"standard": standard, "rigid_pair": rigid_pair}


def desk_training(phase1_iters=1000, phase2_iters=8000, **kw):
    """Training preset for the desk-scale scenes.

    Compared with the defaults: a larger motion-table learning rate, a longer motion phase,
    a stronger residual penalty (res 1.0) so the network does not absorb the rigid motion, and
    a weaker temporal smoothness (0.001) whose one-sided pull otherwise biases the end frames.
    """
    w = kw.pop("weights", LossWeights(res=1.0, smooth=0.001))
    return TrainConfig(phase1_iters=phase1_iters, phase2_iters=phase2_iters, lr_motion_max=1e-2,
                       lr_motion_min=1e-4, weights=w, **kw)
