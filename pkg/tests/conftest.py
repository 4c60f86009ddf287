import pytest


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose the call-phase outcome to fixture finalizers so the
    # acceptance suite can print its verdict lines
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)
