import pytest

from imagegen import paint_image


@pytest.fixture()
def images_root(tmp_path):
    """Two classes with two readable images each."""
    root = tmp_path / "images"
    for c, name in enumerate(["cat", "dog"]):
        class_dir = root / name
        class_dir.mkdir(parents=True)
        for i in range(2):
            paint_image(100 * c + i).save(class_dir / f"img_{i}.png")
    return root
