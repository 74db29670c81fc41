//! HTTP API.
//!
//! Operator routes (bearer token when configured):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/zones` | zone definitions |
//! | GET | `/alerts?status=` | alerts, optionally one status |
//! | GET | `/orders?status=` | work orders |
//! | POST | `/orders` | create; `Idempotency-Key` header or `idempotency_key` field |
//! | POST | `/orders/preview` | route a bin set without creating anything |
//! | POST | `/orders/{id}/status` | `{"status": "IN_PROGRESS" \| "DONE", "collected_bin_ids": [..]}` |
//! | GET | `/bins/{id}/forecast` | time the bin reaches the threshold |
//!
//! Public routes: `GET /public/bins?state=&zone=`,
//! `GET /public/bins/nearest?lat=&lon=&k=` (k defaults to 5), `GET /health`.
//!
//! Errors are `{"error": CODE, "message": text}`.

use std::collections::HashMap;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use binfleet_core::geo::GeoCoordinate;
use binfleet_core::monitoring::{AlertStatus, CenterError, OrderRequest, OrderStatus};
use binfleet_core::public::{list_bins, nearest_available, BinState, QueryError, StatusPolicy};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{CommandError, Service};

pub const DEFAULT_K: usize = 5;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<CenterError> for ApiError {
    fn from(e: CenterError) -> Self {
        let (status, code) = match &e {
            CenterError::UnknownBin(_) | CenterError::UnknownTruck(_) | CenterError::UnknownOrder(_) => {
                (StatusCode::NOT_FOUND, "NOT_FOUND")
            }
            CenterError::NoOpenAlert(_) => (StatusCode::CONFLICT, "NO_OPEN_ALERT"),
            CenterError::BadTransition { .. } => (StatusCode::CONFLICT, "BAD_TRANSITION"),
            CenterError::EmptyOrder => (StatusCode::BAD_REQUEST, "EMPTY_ORDER"),
            CenterError::Routing(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ROUTING"),
            CenterError::Apply(_) => (StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        match e {
            CommandError::Center(c) => c.into(),
            CommandError::Store(s) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "STORE", s.to_string()),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownZone(_) => ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", e.to_string()),
            QueryError::BadK => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(svc: Service) -> Router {
    let operator = Router::new()
        .route("/zones", get(zones))
        .route("/alerts", get(alerts))
        .route("/orders", get(orders).post(create_order))
        .route("/orders/preview", post(preview))
        .route("/orders/{id}/status", post(order_status))
        .route("/bins/{id}/forecast", get(forecast))
        .route_layer(middleware::from_fn_with_state(svc.clone(), require_token));
    Router::new()
        .merge(operator)
        .route("/public/bins", get(public_bins))
        .route("/public/bins/nearest", get(public_nearest))
        .route("/health", get(health))
        .with_state(svc)
}

async fn require_token(State(svc): State<Service>, req: Request, next: Next) -> Response {
    if let Some(token) = svc.operator_token() {
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given.and_then(|v| v.strip_prefix("Bearer ")) != Some(token) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "UNAUTHORIZED", "operator token required").into_response();
        }
    }
    next.run(req).await
}

async fn health(State(svc): State<Service>) -> Json<Value> {
    let events = svc.events_written();
    svc.read(|c, now| {
        Json(json!({
            "status": "ok",
            "now": now,
            "events": events,
            "state_hash": c.state().state_hash(),
            "ingest": c.stats(),
        }))
    })
}

async fn zones(State(svc): State<Service>) -> Json<Value> {
    svc.read(|c, _| Json(json!(c.state().zones.values().collect::<Vec<_>>())))
}

async fn alerts(State(svc): State<Service>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let status = match q.get("status").filter(|s| !s.is_empty()) {
        Some(s) => Some(AlertStatus::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown status {s:?}")))?),
        None => None,
    };
    Ok(svc.read(|c, _| {
        let list: Vec<_> = c.state().alerts.values().filter(|a| status.is_none_or(|s| a.status == s)).collect();
        Json(json!(list))
    }))
}

async fn orders(State(svc): State<Service>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let status = match q.get("status").filter(|s| !s.is_empty()) {
        Some(s) => Some(OrderStatus::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown status {s:?}")))?),
        None => None,
    };
    Ok(svc.read(|c, _| {
        let list: Vec<_> = c.state().orders.values().filter(|o| status.is_none_or(|s| o.status == s)).collect();
        Json(json!(list))
    }))
}

async fn create_order(
    State(svc): State<Service>,
    headers: HeaderMap,
    body: Result<Json<OrderRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(mut req) = body?;
    if let Some(key) = headers.get("idempotency-key") {
        let key = key.to_str().map_err(|_| ApiError::bad_request("Idempotency-Key is not text"))?;
        req.idempotency_key = Some(key.to_owned());
    }
    let (order, created) = svc.command(|c, now| {
        c.create_order(&req, now).map(|(order, events)| {
            let created = !events.is_empty();
            ((order, created), events)
        })
    })?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!(order))))
}

#[derive(Deserialize)]
struct PreviewRequest {
    bin_ids: Vec<String>,
    #[serde(default)]
    truck_id: Option<String>,
}

async fn preview(
    State(svc): State<Service>,
    body: Result<Json<PreviewRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let tour = svc.read(|c, _| c.preview(&req.bin_ids, req.truck_id.as_deref()))?;
    Ok(Json(json!(tour)))
}

#[derive(Deserialize)]
struct StatusRequest {
    status: String,
    #[serde(default)]
    collected_bin_ids: Option<Vec<String>>,
}

async fn order_status(
    State(svc): State<Service>,
    Path(id): Path<String>,
    body: Result<Json<StatusRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let status =
        OrderStatus::parse(&req.status).ok_or_else(|| ApiError::bad_request(format!("unknown status {:?}", req.status)))?;
    let order = svc.command(|c, now| {
        let events = c.set_order_status(&id, status, req.collected_bin_ids.as_deref(), now)?;
        Ok::<_, CenterError>((c.state().orders[&id].clone(), events))
    })?;
    Ok(Json(json!(order)))
}

async fn forecast(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let f = svc.read(|c, now| c.forecast(&id, now))?;
    let mut body = json!(f);
    body["bin_id"] = json!(id);
    Ok(Json(body))
}

async fn public_bins(State(svc): State<Service>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let state = match q.get("state").filter(|s| !s.is_empty()) {
        Some(s) => Some(BinState::parse(s).ok_or_else(|| ApiError::bad_request(format!("unknown state {s:?}")))?),
        None => None,
    };
    let zone = q.get("zone").filter(|z| !z.is_empty());
    let bins = svc.read(|c, now| {
        let policy = StatusPolicy::from(c.policy());
        list_bins(c.state(), state, zone.map(String::as_str), &policy, now)
    })?;
    Ok(Json(json!(bins)))
}

fn number<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("{key}={v:?} is not a number"))))
        .transpose()
}

async fn public_nearest(State(svc): State<Service>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let lat = number::<f64>(&q, "lat")?.ok_or_else(|| ApiError::bad_request("lat is required"))?;
    let lon = number::<f64>(&q, "lon")?.ok_or_else(|| ApiError::bad_request("lon is required"))?;
    let k = number::<usize>(&q, "k")?.unwrap_or(DEFAULT_K);
    let from = GeoCoordinate::new(lat, lon).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let bins = svc.read(|c, now| {
        let policy = StatusPolicy::from(c.policy());
        nearest_available(c.state(), from, k, &policy, now)
    })?;
    Ok(Json(json!(bins)))
}
