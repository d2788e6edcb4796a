import pandas as pd
import pytest

from conftest import small_lattice, small_store
from geomv.application.interfaces.repositories.journal_repository import JournalRecord
from geomv.application.use_cases import multiverse
from geomv.application.use_cases.multiverse import enumerate_tasks, run_lattice
from geomv.infrastructure.database.connection import journal_engine, session_factory
from geomv.infrastructure.database.repositories.sqlalchemy_journal_repository import SQLAlchemyJournalRepository


@pytest.fixture
def journal(tmp_path):
    engine = journal_engine(tmp_path / "journal.sqlite")
    yield SQLAlchemyJournalRepository(session_factory(engine))
    engine.dispose()


def test_record_and_reload(journal):
    journal.record_many(
        [
            JournalRecord("t1", 0, "ok", {"beta1": 0.25, "beta2": None, "n_obs": 90}, None),
            JournalRecord("t2", 1, "error", {}, "ClusterError: one cluster"),
        ]
    )
    done = journal.completed()
    assert list(done) == ["t1", "t2"]
    assert done["t1"].payload == {"beta1": 0.25, "beta2": None, "n_obs": 90}
    assert done["t2"].error == "ClusterError: one cluster"
    assert journal.count() == 2


def test_rewriting_a_task_keeps_one_row(journal):
    journal.record_many([JournalRecord("t1", 0, "error", {}, "boom")])
    journal.record_many([JournalRecord("t1", 0, "ok", {"beta1": 1.0}, None)])
    assert journal.count() == 1
    assert journal.completed()["t1"].status == "ok"


def test_resume_recomputes_nothing(journal, rng, monkeypatch):
    tasks = enumerate_tasks(small_lattice())
    store = small_store(rng)
    first = run_lattice(tasks, store, journal=journal)
    assert journal.count() == len(tasks)

    def refuse(*args, **kwargs):
        raise AssertionError("fit called for a journaled task")

    monkeypatch.setattr(multiverse, "fit", refuse)
    second = run_lattice(tasks, store, journal=journal)
    pd.testing.assert_frame_equal(first, second, check_dtype=False)


def test_partial_journal_only_runs_the_rest(journal, rng, monkeypatch):
    tasks = enumerate_tasks(small_lattice())
    store = small_store(rng)
    head = tasks[:5]
    run_lattice(head, store, journal=journal)

    calls = []
    real_fit = multiverse.fit

    def counting(*args, **kwargs):
        calls.append(1)
        return real_fit(*args, **kwargs)

    monkeypatch.setattr(multiverse, "fit", counting)
    results = run_lattice(tasks, store, journal=journal)
    assert len(calls) == len(tasks) - len(head)
    assert results["task_id"].tolist() == [t.task_id for t in tasks]
    assert journal.count() == len(tasks)
