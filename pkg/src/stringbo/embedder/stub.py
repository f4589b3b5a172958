"""A local embedding server speaking the remote protocol, backed by hashed embeddings.

Used by tests and for offline development::

    server = serve_in_thread(port=0)
    endpoint = f"http://127.0.0.1:{server.server_port}"
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .hashing import hash_embed_batch


def _handler(dim, n, fail_first, fail_status):
    state = {"remaining_failures": fail_first, "requests": 0}
    lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _reply(self, status, body):
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            with lock:
                state["requests"] += 1
                fail = state["remaining_failures"] > 0
                if fail:
                    state["remaining_failures"] -= 1
            if self.path != "/v1/embed":
                self._reply(404, {"error": "not found"})
                return
            if fail:
                self._reply(fail_status, {"error": "injected failure"})
                return
            try:
                texts = json.loads(raw)["texts"]
            except (ValueError, KeyError):
                self._reply(400, {"error": "bad request"})
                return
            vecs = hash_embed_batch(texts, dim, n)
            self._reply(200, {"dim": dim, "embeddings": vecs.tolist()})

    return Handler, state


def serve_in_thread(host="127.0.0.1", port=0, dim=256, n=3, fail_first=0, fail_status=500):
    handler, state = _handler(dim, n, fail_first, fail_status)
    server = ThreadingHTTPServer((host, port), handler)
    server.stats = state
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
