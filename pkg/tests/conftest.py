import numpy as np
import pytest

from vetrad.domain import BodyPart, ImageRecord, load_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


def make_image(
    image_id="img-1",
    study_id="study-1",
    body_part=BodyPart.THORAX,
    pixels=None,
    size=16,
    seed=0,
    **kwargs,
):
    if pixels is None:
        pixels = np.random.default_rng(seed).uniform(0, 1, (size, size))
    defaults = dict(
        patient_id="patient-1",
        organization_id="org-1",
        species="canine",
        acquired_at=1_753_000_000.0,
    )
    defaults.update(kwargs)
    return ImageRecord(
        image_id=image_id,
        study_id=study_id,
        body_part=body_part,
        pixels=pixels,
        **defaults,
    )
