from .vocab import Vocabulary
