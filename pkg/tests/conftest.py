import pytest

from halomis.dataset import AnnotatedSample, Dataset

# (criterion, description, passed, detail) recorded by the acceptance suite
ACCEPTANCE_LINES = []


def record(criterion, description, passed, detail=""):
    ACCEPTANCE_LINES.append((criterion, description, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, description, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"AC{criterion:<3} {status}  {description}  {detail}".rstrip())


def make_sample(i, hal=0, omis=0, prompt=None, response=None, source="custom"):
    return AnnotatedSample(
        id=f"s{i:04d}",
        prompt=prompt or f"How do I cope with stress at work? ({i})",
        response=response or f"Try taking short breaks and talking to someone you trust. ({i})",
        label_hallucination=hal,
        label_omission=omis,
        source=source,
    )


@pytest.fixture
def small_dataset():
    labels = [(1, 0), (0, 1), (0, 0), (1, 1), (0, 0), (0, 0), (1, 0), (0, 0), (0, 1), (0, 0)]
    return Dataset([make_sample(i, h, o) for i, (h, o) in enumerate(labels)])


class RoutedBackend:
    """Backend double answering by template: ``routes`` maps template id to a
    JSON-able reply, a raw string, or a callable taking the request."""

    def __init__(self, routes, backend_id="routed"):
        from halomis.prompts import ANCHORS

        self.anchors = ANCHORS
        self.routes = routes
        self.backend_id = backend_id
        self.calls = 0
        self.seen = []

    def complete(self, request):
        import json

        from halomis.llm import ChatResponse

        self.calls += 1
        tid = next(t for t, a in self.anchors.items() if a in request.user_text)
        self.seen.append(tid)
        reply = self.routes[tid]
        if callable(reply):
            reply = reply(request)
        if isinstance(reply, Exception):
            raise reply
        text = reply if isinstance(reply, str) else json.dumps(reply)
        return ChatResponse(text, 0.0, self.backend_id, 1)


@pytest.fixture
def mock_backend():
    from halomis.llm import BackendConfig, MockBackend

    return MockBackend(BackendConfig(kind="mock", mock_seed=42))
