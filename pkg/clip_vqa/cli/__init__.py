from clip_vqa.cli.main import app

__all__ = ["app"]
