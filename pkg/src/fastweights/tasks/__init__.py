from . import catch, glimpse, mnist, retrieval

__all__ = ["catch", "glimpse", "mnist", "retrieval"]
