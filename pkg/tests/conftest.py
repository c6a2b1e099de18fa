import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
KLINES_FIXTURE = FIXTURES / "klines_ETHBTC_1d.json"
DAY_MS = 86_400_000


def synthetic_klines(n, start=1_500_000_000_000, price=0.003):
    rows = []
    for i in range(n):
        close = price * (1 + 0.001 * ((i * 37) % 11 - 5))
        open_time = start + i * DAY_MS
        rows.append([open_time, f"{price:.8f}", f"{close * 1.01:.8f}", f"{close * 0.99:.8f}",
                     f"{close:.8f}", "100.00000000", open_time + DAY_MS - 1, "0.30000000", 42,
                     "50.00000000", "0.15000000", "0"])
    return rows


class KlinesServer:
    """In-process stand-in for the public klines endpoint."""

    def __init__(self, symbols):
        self.symbols = symbols
        self.requests = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                url = urlparse(self.path)
                query = {k: v[0] for k, v in parse_qs(url.query).items()}
                server.requests.append((url.path, query))
                if url.path != "/api/v3/klines":
                    return self._send(404, {"code": -1, "msg": "not found"})
                rows = server.symbols.get(query.get("symbol"))
                if rows is None:
                    return self._send(400, {"code": -1121, "msg": "Invalid symbol."})
                if "endTime" in query:
                    rows = [r for r in rows if r[0] <= int(query["endTime"])]
                limit = int(query.get("limit", 500))
                self._send(200, rows[-limit:] if limit else [])

            def _send(self, status, body):
                payload = json.dumps(body, separators=(",", ":")).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def klines_fixture_rows():
    return json.loads(KLINES_FIXTURE.read_text())


@pytest.fixture
def klines_server(klines_fixture_rows):
    fixture = klines_fixture_rows
    symbols = {
        "ETHBTC": fixture,
        # Same close times as the fixture so the inner join keeps every row.
        "LTCBTC": [[r[0], "0.00269000", "0.00270000", "0.00268000", f"{0.0027 + 1e-6 * i:.8f}",
                    "10.00000000", r[6], "0.02700000", 7, "5.00000000", "0.01350000", "0"]
                   for i, r in enumerate(fixture)],
        "NEOBTC": synthetic_klines(2500),
    }
    with KlinesServer(symbols) as server:
        yield server
