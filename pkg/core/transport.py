"""
Request/response plumbing shared by every service.

A service declares a route table once; the in-process dispatcher and the
FastAPI application both serve that same table, so the two transports
honour an identical contract.
"""

import json
import re
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from typing import Any, AsyncIterator, Dict, List, Optional, Tuple
from urllib.parse import parse_qsl, urlsplit

import httpx
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse, Response

from core.config import config
from core.errors import ServiceError, TransportError
from core.utils import setup_logging, split_url

logger = setup_logging(__name__)


# ============================================================================
# REQUESTS, REPLIES AND ROUTES
# ============================================================================

@dataclass
class ServiceRequest:
    """A decoded request as seen by a route handler."""
    path_params: Dict[str, str] = field(default_factory=dict)
    query: Dict[str, str] = field(default_factory=dict)
    body: Any = None


@dataclass
class Reply:
    """A decoded response: status, JSON body and extra headers."""
    status: int = 200
    body: Any = None
    headers: Dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300

    @property
    def detail(self) -> str:
        if isinstance(self.body, dict) and "detail" in self.body:
            return str(self.body["detail"])
        return "" if self.body is None else str(self.body)


@dataclass
class Route:
    """One entry of a service route table."""
    method: str
    path: str
    handler: str
    pattern: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        regex = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", self.path)
        self.pattern = re.compile(f"^{regex}$")


class Service:
    """Base class for every simulation service."""

    ROUTES: List[Tuple[str, str, str]] = [
        ("GET", "/health", "health"),
    ]

    def __init__(self, name: str, base_url: str, transport: "BaseTransport"):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.transport = transport
        self.route_table = [Route(*entry) for entry in self._collect_routes()]
        self._lock = threading.RLock()

    @classmethod
    def _collect_routes(cls) -> List[Tuple[str, str, str]]:
        routes: List[Tuple[str, str, str]] = []
        for klass in reversed(cls.__mro__):
            for entry in klass.__dict__.get("ROUTES", []):
                if entry not in routes:
                    routes.append(entry)
        return routes

    def url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def health(self, request: ServiceRequest) -> Dict[str, Any]:
        return {"service": self.name, "status": "ok"}

    def match(self, method: str, path: str) -> Tuple[Route, Dict[str, str]]:
        """Resolve a method and path against the route table."""
        path_matched = False
        for route in self.route_table:
            found = route.pattern.match(path)
            if not found:
                continue
            path_matched = True
            if route.method == method:
                return route, found.groupdict()
        if path_matched:
            raise ServiceError(405, f"Method {method} not allowed on {path}")
        raise ServiceError(404, f"No resource at {path}")

    def dispatch(self, route: Route, path_params: Dict[str, str],
                 query: Dict[str, str], body: Any) -> Reply:
        """Run a handler and turn its outcome into a Reply."""
        try:
            handler = getattr(self, route.handler)
            result = handler(ServiceRequest(path_params, query, body))
            return result if isinstance(result, Reply) else Reply(200, result)
        except ServiceError as e:
            return Reply(e.status, {"detail": e.detail}, dict(e.headers))
        except Exception as e:
            logger.exception("handler_failed", service=self.name, handler=route.handler)
            return Reply(500, {"detail": f"{type(e).__name__}: {e}"})

    def handle(self, method: str, path: str, query: Optional[Dict[str, str]] = None,
               body: Any = None) -> Reply:
        try:
            route, params = self.match(method.upper(), path)
        except ServiceError as e:
            return Reply(e.status, {"detail": e.detail})
        return self.dispatch(route, params, query or {}, body)

    def close(self) -> None:
        """Release resources held by the service."""


# ============================================================================
# TRANSPORTS
# ============================================================================

class BaseTransport:
    """Common verbs on top of a single request method."""

    def request(self, method: str, url: str, json_body: Any = None,
                params: Optional[Dict[str, Any]] = None) -> Reply:
        raise NotImplementedError

    def get(self, url: str, params: Optional[Dict[str, Any]] = None) -> Reply:
        return self.request("GET", url, params=params)

    def post(self, url: str, json_body: Any = None) -> Reply:
        return self.request("POST", url, json_body)

    def put(self, url: str, json_body: Any = None) -> Reply:
        return self.request("PUT", url, json_body)

    def delete(self, url: str) -> Reply:
        return self.request("DELETE", url)

    def close(self) -> None:
        pass


def _round_trip(document: Any) -> Any:
    return None if document is None else json.loads(json.dumps(document))


class InProcessTransport(BaseTransport):
    """Dispatches requests straight to services mounted under their base URLs."""

    def __init__(self):
        self._services: Dict[str, Service] = {}

    def mount(self, service: Service) -> None:
        self._services[service.base_url] = service

    def request(self, method: str, url: str, json_body: Any = None,
                params: Optional[Dict[str, Any]] = None) -> Reply:
        base, path = split_url(url)
        service = self._services.get(base)
        if service is None:
            raise TransportError(f"Connection refused: {base}")
        query = dict(parse_qsl(urlsplit(url).query))
        query.update({key: str(value) for key, value in (params or {}).items()})
        reply = service.handle(method, path, query, _round_trip(json_body))
        return Reply(reply.status, _round_trip(reply.body), dict(reply.headers))


class HttpTransport(BaseTransport):
    """Sends requests over HTTP with httpx."""

    def __init__(self, timeout: Optional[float] = None,
                 clients: Optional[Dict[str, httpx.Client]] = None):
        self._timeout = config.http_timeout if timeout is None else timeout
        self._clients = dict(clients or {})
        self._default: Optional[httpx.Client] = None

    def _client_for(self, base: str) -> httpx.Client:
        if base in self._clients:
            return self._clients[base]
        if self._default is None:
            self._default = httpx.Client(timeout=self._timeout)
        return self._default

    def request(self, method: str, url: str, json_body: Any = None,
                params: Optional[Dict[str, Any]] = None) -> Reply:
        base, _ = split_url(url)
        try:
            response = self._client_for(base).request(method, url, json=json_body, params=params)
        except httpx.TransportError as e:
            raise TransportError(f"{method} {url} failed: {e}") from e
        body: Any = None
        if response.content:
            try:
                body = response.json()
            except ValueError:
                body = response.text
        return Reply(response.status_code, body, dict(response.headers))

    def close(self) -> None:
        if self._default is not None:
            self._default.close()
            self._default = None


# ============================================================================
# FASTAPI MOUNTING
# ============================================================================

def _endpoint(service: Service, route: Route):
    async def endpoint(request: Request) -> Response:
        raw = await request.body()
        body = None
        if raw:
            try:
                body = json.loads(raw)
            except ValueError:
                return JSONResponse({"detail": "Malformed JSON body"}, status_code=400)
        reply = await run_in_threadpool(
            service.dispatch, route, dict(request.path_params), dict(request.query_params), body,
        )
        if reply.body is None:
            return Response(status_code=reply.status, headers=reply.headers)
        return JSONResponse(reply.body, status_code=reply.status, headers=reply.headers)

    endpoint.__name__ = route.handler
    return endpoint


def build_app(service: Service) -> FastAPI:
    """Mount a service's route table on a FastAPI application."""

    @asynccontextmanager
    async def lifespan(_app: FastAPI) -> AsyncIterator[None]:
        yield
        service.close()

    app = FastAPI(title=service.name, lifespan=lifespan)
    for route in service.route_table:
        app.add_api_route(route.path, _endpoint(service, route), methods=[route.method], name=route.handler)
    return app
