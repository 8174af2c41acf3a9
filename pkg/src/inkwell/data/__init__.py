"""Bundled desk-scale training corpus."""

from importlib import resources


def load_corpus() -> str:
    """Full corpus text (UTF-8 prose, blank-line paragraph breaks)."""
    return resources.files(__package__).joinpath("corpus.txt").read_text("utf-8")


def corpus_documents(target_chars: int = 1000) -> list[str]:
    """Corpus split into documents of roughly ``target_chars`` characters.

    Adjacent paragraphs are merged until the target is reached; document
    boundaries control how often the trained model sees an end-of-sequence,
    hence how long its generations tend to run.
    """
    paragraphs = [p.strip() for p in load_corpus().split("\n\n") if p.strip()]
    docs: list[str] = []
    cur = ""
    for para in paragraphs:
        cur = para if not cur else cur + "\n" + para
        if len(cur) >= target_chars:
            docs.append(cur)
            cur = ""
    if cur:
        docs.append(cur)
    return docs
