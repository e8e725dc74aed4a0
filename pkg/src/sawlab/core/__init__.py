from sawlab.core.episode_log import EpisodeLog, EpisodeRecord
from sawlab.core.quaternion import UnitQuaternion, qd, split_yaw, wrap_angle
from sawlab.core.types import (
    STANDING,
    Command,
    MirrorSpec,
    Observation,
    mirror_act,
    mirror_features,
    mirror_obs,
    observation_features,
)


def yaw_quat(cmd: Command) -> UnitQuaternion:
    """Pure-yaw rotation at the command's heading target."""
    return UnitQuaternion.from_yaw(cmd.heading_ref)


def rp_quat(obs: Observation) -> UnitQuaternion:
    """Roll-pitch part of the torso orientation with yaw removed."""
    return split_yaw(obs.torso_orientation)[1]


__all__ = [
    "Command", "EpisodeLog", "EpisodeRecord", "MirrorSpec", "Observation", "STANDING",
    "UnitQuaternion", "mirror_act", "mirror_features", "mirror_obs", "observation_features",
    "qd", "rp_quat", "split_yaw", "wrap_angle", "yaw_quat",
]
