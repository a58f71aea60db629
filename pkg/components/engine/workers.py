"""Bounded fan-out over documents with per-document failure isolation."""

from concurrent.futures import ThreadPoolExecutor, as_completed

from pydantic import BaseModel

from components.logging_utils import get_logger
from components.provider.llm_utils import ProviderAuthError, ProviderError

logger = get_logger(__name__)


class RunAbortedError(RuntimeError):
    """More documents failed than the run's failure threshold allows."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DocumentFailure(BaseModel):
    doc_id: str
    error: str


def check_failure_threshold(n_failed, n_total, threshold, label, partial=None):
    if n_total and n_failed / n_total > threshold:
        raise RunAbortedError(
            f"{label}: {n_failed}/{n_total} documents failed, above the {threshold:.0%} failure threshold",
            partial=partial,
        )


def run_documents(docs, fn, workers, failure_threshold, label='run'):
    """
    Apply fn to every document on a pool of `workers` threads.

    Provider and validation failures mark the document failed and the run
    continues; authentication failures abort at once. Results come back in
    document order whatever the completion order was.

    Returns:
        (results, failures): list of (doc, result) for successes, list of DocumentFailure
    """
    results, errors = {}, {}
    pool = ThreadPoolExecutor(max_workers=workers)
    try:
        futures = {pool.submit(fn, doc): doc for doc in docs}
        for future in as_completed(futures):
            doc = futures[future]
            try:
                results[doc.id] = future.result()
            except ProviderAuthError:
                pool.shutdown(wait=False, cancel_futures=True)
                raise
            except (ProviderError, ValueError) as e:
                logger.warning(f"⚠ {label}: document {doc.id} failed: {e}")
                errors[doc.id] = str(e)
    finally:
        pool.shutdown(wait=True)

    ordered = [(doc, results[doc.id]) for doc in docs if doc.id in results]
    failures = [DocumentFailure(doc_id=doc.id, error=errors[doc.id]) for doc in docs if doc.id in errors]
    check_failure_threshold(len(failures), len(docs), failure_threshold, label, partial=(ordered, failures))
    logger.info(f"✓ {label}: {len(ordered)} documents done, {len(failures)} failed")
    return ordered, failures
