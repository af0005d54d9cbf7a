"""Input validation helpers shared by the estimators and the CLI."""

from .fields import Field


def check_field_list(X, name="X"):
    """All elements are Fields with identical channels and dimensions."""
    X = list(X)
    if not X:
        raise ValueError(f"{name} is empty")
    first = X[0]
    for i, f in enumerate(X):
        if not isinstance(f, Field):
            raise TypeError(f"{name}[{i}] is {type(f).__name__}, expected Field")
        if f.channels != first.channels:
            raise ValueError(
                f"{name}[{i}] channels {f.channels} differ from {first.channels}"
            )
        if (f.height, f.width) != (first.height, first.width):
            raise ValueError(
                f"{name}[{i}] is {f.height}x{f.width}, expected "
                f"{first.height}x{first.width}"
            )
    return X


def check_paired_fields(X, y, scale, name_x="X", name_y="y"):
    """Paired LR/HR lists whose dimensions differ exactly by the scale."""
    X = check_field_list(X, name_x)
    y = check_field_list(y, name_y)
    if len(X) != len(y):
        raise ValueError(f"{name_x} has {len(X)} samples but {name_y} has {len(y)}")
    lr, hr = X[0], y[0]
    if hr.height != lr.height * scale or hr.width != lr.width * scale:
        raise ValueError(
            f"HR {hr.height}x{hr.width} is not {scale}x the LR {lr.height}x{lr.width}"
        )
    return X, y


def check_io_config(io_config, channels, target_channel):
    """Target channel names for a '3in1out' or '3in3out' configuration."""
    if io_config == "3in1out":
        if target_channel not in channels:
            raise ValueError(f"target channel {target_channel!r} not in {channels}")
        return (target_channel,)
    if io_config == "3in3out":
        return tuple(channels)
    raise ValueError(f"io_config must be '3in1out' or '3in3out', got {io_config!r}")


def check_scale(scale):
    if scale not in (4, 8):
        raise ValueError(f"scale must be 4 or 8, got {scale}")
    return scale
