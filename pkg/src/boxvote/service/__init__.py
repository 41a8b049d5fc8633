from .app import create_app, load_state

__all__ = ["create_app", "load_state"]
