from __future__ import annotations

import pytest

from emoqueue.emolex import load_emoji_lexicon, load_lexicon


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon()


@pytest.fixture(scope="session")
def emoji_lexicon():
    return load_emoji_lexicon()
