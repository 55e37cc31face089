"""A scripted stand-in for the remote backend, used by tests and demos.

It records every request body it receives and replays a fixed sequence of
canned responses (the last one repeats once the script runs out).  Run it
standalone with `python -m blockmend.mock_llm --response-file a.txt b.txt`.
"""

from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
import json
import threading


class MockLlmServer:
    def __init__(self, responses, host="127.0.0.1", port=0):
        self.responses = list(responses)
        self.requests = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw.decode("utf-8"))
                except ValueError:
                    body = {"raw": raw.decode("utf-8", "replace")}
                with outer._lock:
                    outer.requests.append(body)
                    index = min(len(outer.requests) - 1, len(outer.responses) - 1)
                    text = outer.responses[index] if outer.responses else ""
                payload = json.dumps({"text": text}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, fmt, *args):
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self._server.server_address[:2]
        return "http://%s:%d/" % (host, port)

    @property
    def request_count(self):
        with self._lock:
            return len(self.requests)

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(description="run the scripted mock backend")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8971)
    parser.add_argument("--response-file", nargs="+", required=True,
                        help="files whose contents are replayed in order")
    args = parser.parse_args(argv)
    responses = []
    for path in args.response_file:
        with open(path, "r", encoding="utf-8") as fh:
            responses.append(fh.read())
    server = MockLlmServer(responses, host=args.host, port=args.port)
    server.start()
    print("mock backend on %s (replies: %d)" % (server.url, len(responses)))
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
