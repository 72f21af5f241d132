use std::ops::RangeInclusive;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::extract::{FromRequest, Path, State as Extract};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{Html, IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};
use ustrack_core::annot::{guess as guess_position, interpolate_gaps, save_layer, InterpolateOptions};
use ustrack_core::jitterfilter::{filter_layer_with_progress, filtered_layer_name, Window};
use ustrack_core::{AnnotationLayer, AnnotationStore, FilterConfig, Point2, Tracker};

use super::{ApiError, JobState, Session, State};

type Shared = Extract<Arc<Session>>;
type ApiResult<T = Json<Value>> = Result<T, ApiError>;

/// JSON body whose rejections become 422 responses with field messages.
#[derive(FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct Body<T>(T);

/// Checks `If-Match` against the layer revision and returns the revision.
fn expect_revision(headers: &HeaderMap, store: &AnnotationStore, layer: &str) -> Result<u64, ApiError> {
    let current = store.revision(layer)?;
    if let Some(value) = headers.get(header::IF_MATCH) {
        let text = value.to_str().unwrap_or("").trim();
        if text == "*" {
            return Ok(current);
        }
        let expected: u64 = text
            .trim_start_matches("W/")
            .trim_matches('"')
            .parse()
            .map_err(|_| ApiError::field("If-Match", format!("`{text}` is not a layer revision")))?;
        if expected != current {
            return Err(ApiError::conflict(
                format!("layer `{layer}` is at revision {current}, the request expected {expected}"),
                current,
            ));
        }
    }
    Ok(current)
}

fn mark_dirty(state: &mut State, layer: &str) -> u64 {
    state.dirty.insert(layer.to_string());
    state.store.revision(layer).expect("layer exists after an edit")
}

fn check_range(range: Option<[usize; 2]>, frames: usize) -> Result<RangeInclusive<usize>, ApiError> {
    let [a, b] = range.unwrap_or([0, frames - 1]);
    if a > b || b >= frames {
        return Err(ApiError::field(
            "range",
            format!("[{a}, {b}] is not a frame range within 0..{frames}"),
        ));
    }
    Ok(a..=b)
}

fn label_choice(label: Option<String>, all: bool) -> Result<Option<String>, ApiError> {
    match (label, all) {
        (Some(l), false) => Ok(Some(l)),
        (None, true) => Ok(None),
        _ => Err(ApiError::field("label", "give either `label` or `all: true`")),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

pub async fn spec() -> Json<Value> {
    Json(super::openapi_document())
}

pub async fn no_route(uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {}", uri.path()))
}

pub async fn meta(Extract(s): Shared) -> Json<Value> {
    let seq = s.sequence();
    let cal = seq.calibration();
    Json(json!({
        "frames": seq.len(),
        "fps": cal.fps,
        "width": seq.width(),
        "height": seq.height(),
        "mm_per_px": [cal.mm_per_px_x, cal.mm_per_px_y],
        "filter": s.config().filter,
    }))
}

pub async fn frame(Extract(s): Shared, Path(i): Path<usize>) -> ApiResult<Response> {
    let n = s.sequence().len();
    if i >= n {
        return Err(ApiError::not_found(format!("frame {i} out of range for a {n}-frame sequence")));
    }
    let png = blocking(move || {
        s.sequence()
            .frame(i)
            .encode_png()
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

pub async fn list_layers(Extract(s): Shared) -> Json<Value> {
    let state = s.lock();
    let layers: Vec<Value> = state
        .store
        .layers()
        .map(|l| {
            json!({
                "name": l.name(),
                "rev": state.store.revision(l.name()).unwrap_or(0),
                "labels": l.label_ids().collect::<Vec<_>>(),
                "points": l.labels().values().map(|t| t.len()).sum::<usize>(),
                "dirty": state.dirty.contains(l.name()),
            })
        })
        .collect();
    Json(Value::Array(layers))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateLayer {
    name: String,
}

pub async fn create_layer(Extract(s): Shared, Body(req): Body<CreateLayer>) -> ApiResult<(StatusCode, Json<Value>)> {
    let mut state = s.lock();
    state.store.create_layer(&req.name)?;
    let rev = mark_dirty(&mut state, &req.name);
    Ok((StatusCode::CREATED, Json(json!({ "name": req.name, "rev": rev }))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddLabel {
    label: String,
}

pub async fn add_label(
    Extract(s): Shared,
    Path(layer): Path<String>,
    headers: HeaderMap,
    Body(req): Body<AddLabel>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    if req.label.is_empty() {
        return Err(ApiError::field("label", "must be non-empty"));
    }
    let mut state = s.lock();
    expect_revision(&headers, &state.store, &layer)?;
    state.store.add_label(&layer, &req.label)?;
    let rev = mark_dirty(&mut state, &layer);
    Ok((StatusCode::CREATED, Json(json!({ "label": req.label, "rev": rev }))))
}

pub async fn get_label(Extract(s): Shared, Path((layer, label)): Path<(String, String)>) -> ApiResult {
    let state = s.lock();
    let traj = state.store.layer(&layer)?.label(&label)?;
    let points: Vec<Value> = traj.iter().map(|(f, p)| json!({ "frame": f, "x": p.x, "y": p.y })).collect();
    Ok(Json(json!({
        "layer": layer,
        "label": label,
        "rev": state.store.revision(&layer)?,
        "points": points,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBody {
    x: f64,
    y: f64,
}

pub async fn put_point(
    Extract(s): Shared,
    Path((layer, label, frame)): Path<(String, String, usize)>,
    headers: HeaderMap,
    Body(p): Body<PointBody>,
) -> ApiResult {
    let mut state = s.lock();
    expect_revision(&headers, &state.store, &layer)?;
    state.store.set_point(&layer, &label, frame, Point2::new(p.x, p.y))?;
    let rev = mark_dirty(&mut state, &layer);
    Ok(Json(json!({ "frame": frame, "x": p.x, "y": p.y, "rev": rev })))
}

pub async fn delete_point(
    Extract(s): Shared,
    Path((layer, label, frame)): Path<(String, String, usize)>,
    headers: HeaderMap,
) -> ApiResult {
    let mut state = s.lock();
    expect_revision(&headers, &state.store, &layer)?;
    state.store.bounds().check_frame(frame)?;
    if state.store.layer(&layer)?.label(&label)?.get(frame).is_none() {
        return Err(ApiError::not_found(format!("label `{label}` has no point at frame {frame}")));
    }
    state.store.remove_point(&layer, &label, frame)?;
    let rev = mark_dirty(&mut state, &layer);
    Ok(Json(json!({ "frame": frame, "rev": rev })))
}

pub async fn annotated_frames(Extract(s): Shared, Path(layer): Path<String>) -> ApiResult<Json<Vec<usize>>> {
    Ok(Json(s.lock().store.layer(&layer)?.annotated_frames()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessBody {
    layer: String,
    label: String,
    frame: usize,
}

pub async fn guess(Extract(s): Shared, Body(req): Body<GuessBody>) -> ApiResult {
    let layer = s.layer(&req.layer)?;
    s.lock().store.bounds().check_frame(req.frame)?;
    let g = blocking(move || {
        let tracker = Tracker::new(s.sequence(), s.config().filter.rstc.track)?;
        Ok(guess_position(&tracker, &layer, &req.label, req.frame)?)
    })
    .await?;
    Ok(Json(json!({
        "x": g.p.x,
        "y": g.p.y,
        "status": g.status,
        "source_frame": g.source_frame,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateBody {
    layer: String,
    label: Option<String>,
    #[serde(default)]
    all: bool,
    range: Option<[usize; 2]>,
    #[serde(default)]
    overwrite: bool,
    alpha: Option<f64>,
}

pub async fn interpolate(Extract(s): Shared, headers: HeaderMap, Body(req): Body<InterpolateBody>) -> ApiResult {
    let label = label_choice(req.label, req.all)?;
    let range = check_range(req.range, s.sequence().len())?;
    let (mut layer, rev) = {
        let state = s.lock();
        let rev = expect_revision(&headers, &state.store, &req.layer)?;
        (state.store.layer(&req.layer)?.clone(), rev)
    };
    let opts = InterpolateOptions {
        alpha: req.alpha.unwrap_or(s.config().filter.rstc.alpha),
        overwrite: req.overwrite,
        anchors: None,
    };
    let worker = s.clone();
    let (layer, written) = blocking(move || {
        let tracker = Tracker::new(worker.sequence(), worker.config().filter.rstc.track)?;
        let n = interpolate_gaps(&tracker, &mut layer, label.as_deref(), range, &opts)?;
        Ok((layer, n))
    })
    .await?;

    let mut state = s.lock();
    let current = state.store.revision(&req.layer)?;
    if current != rev {
        return Err(ApiError::conflict(
            format!("layer `{}` changed while interpolating", req.layer),
            current,
        ));
    }
    let rev = if written > 0 {
        state.store.edit(&req.layer, |l, _| {
            *l = layer;
            Ok(())
        })?;
        mark_dirty(&mut state, &req.layer)
    } else {
        current
    };
    Ok(Json(json!({ "modified": written, "rev": rev })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimBody {
    layer: String,
    expected: Vec<String>,
}

pub async fn trim(Extract(s): Shared, headers: HeaderMap, Body(req): Body<TrimBody>) -> ApiResult {
    if req.expected.is_empty() {
        return Err(ApiError::field("expected", "needs at least one label"));
    }
    let mut state = s.lock();
    expect_revision(&headers, &state.store, &req.layer)?;
    let removed = state.store.trim(&req.layer, &req.expected)?;
    let rev = mark_dirty(&mut state, &req.layer);
    Ok(Json(json!({ "removed": removed, "rev": rev })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopyBody {
    src: String,
    dst: String,
    range: Option<[usize; 2]>,
    label: Option<String>,
    #[serde(default)]
    all: bool,
}

pub async fn copy(Extract(s): Shared, headers: HeaderMap, Body(req): Body<CopyBody>) -> ApiResult {
    let label = label_choice(req.label, req.all)?;
    let range = check_range(req.range, s.sequence().len())?;
    let mut state = s.lock();
    state.store.layer(&req.src)?;
    expect_revision(&headers, &state.store, &req.dst)?;
    let copied = state.store.copy_range(&req.src, &req.dst, label.as_deref(), range)?;
    let rev = mark_dirty(&mut state, &req.dst);
    Ok(Json(json!({ "copied": copied, "rev": rev })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBody {
    layer: String,
    window: Option<Window>,
    alpha: Option<f64>,
    labels: Option<Vec<String>>,
}

pub async fn filter(Extract(s): Shared, Body(req): Body<FilterBody>) -> ApiResult<(StatusCode, Json<Value>)> {
    let source = s.layer(&req.layer)?;
    let defaults = s.config().filter;
    let mut cfg = FilterConfig {
        window: req.window.unwrap_or(defaults.window),
        rstc: defaults.rstc,
    };
    if let Some(a) = req.alpha {
        cfg.rstc.alpha = a;
    }
    cfg.rstc.validate()?;
    let seq = s.sequence();
    let w = cfg.window.frames(seq.fps())?;
    if w > seq.len() {
        return Err(ustrack_core::jitterfilter::FilterError::WindowTooLong {
            window: w,
            frames: seq.len(),
        }
        .into());
    }

    let mut input = AnnotationLayer::new(source.name())?;
    let labels: Vec<String> = match req.labels {
        Some(l) => l,
        None => source.label_ids().map(str::to_string).collect(),
    };
    for label in &labels {
        let traj = source.label(label)?;
        if let Err(missing) = traj.to_dense(seq.len()) {
            return Err(ApiError::field(
                "layer",
                format!("label `{label}` is missing {} frame(s), first {}", missing.len(), missing[0]),
            ));
        }
        input.insert_trajectory(label.clone(), traj.clone());
    }

    let output = filtered_layer_name(source.name());
    let (id, job) = s.add_job(output.clone());
    let worker = s.clone();
    tokio::task::spawn_blocking(move || {
        let report = |done: usize, total: usize| {
            job.total.store(total, Ordering::Relaxed);
            job.done.store(done, Ordering::Relaxed);
        };
        let result = filter_layer_with_progress(worker.sequence(), &input, &cfg, &report)
            .map_err(|e| e.to_string())
            .and_then(|layer| {
                let mut state = worker.lock();
                let name = layer.name().to_string();
                let stored = if state.store.layer(&name).is_ok() {
                    state.store.edit(&name, |l, _| {
                        *l = layer;
                        Ok(())
                    })
                } else {
                    state.store.add_layer(layer)
                };
                stored.map_err(|e| e.to_string())?;
                mark_dirty(&mut state, &name);
                Ok(())
            });
        *job.outcome.lock().unwrap_or_else(|e| e.into_inner()) = match result {
            Ok(()) => (JobState::Done, None),
            Err(e) => (JobState::Failed, Some(e)),
        };
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": id, "layer": output, "window_frames": w }))))
}

pub async fn job(Extract(s): Shared, Path(id): Path<u64>) -> ApiResult {
    let job = s.job(id).ok_or_else(|| ApiError::not_found(format!("job {id} not found")))?;
    let (state, error) = job.outcome.lock().unwrap_or_else(|e| e.into_inner()).clone();
    let progress = match state {
        JobState::Done => 1.0,
        _ => {
            let total = job.total.load(Ordering::Relaxed);
            if total == 0 {
                0.0
            } else {
                job.done.load(Ordering::Relaxed) as f64 / total as f64
            }
        }
    };
    Ok(Json(json!({
        "id": id,
        "state": state,
        "progress": progress,
        "layer": job.layer,
        "error": error,
    })))
}

/// File name for a layer: characters outside `[A-Za-z0-9._-]` become `_`.
pub fn layer_file_name(layer: &str) -> String {
    let stem: String = layer
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    let stem = stem.trim_start_matches('.');
    format!("{}.annot.json", if stem.is_empty() { "layer" } else { stem })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaveBody {
    layer: String,
}

pub async fn save(Extract(s): Shared, Body(req): Body<SaveBody>) -> ApiResult {
    let (layer, rev) = {
        let state = s.lock();
        (state.store.layer(&req.layer)?.clone(), state.store.revision(&req.layer)?)
    };
    let path = s.config().save_dir.join(layer_file_name(&req.layer));
    let target = path.clone();
    blocking(move || Ok(save_layer(&layer, &target)?)).await?;
    let mut state = s.lock();
    if state.store.revision(&req.layer).ok() == Some(rev) {
        state.dirty.remove(&req.layer);
    }
    Ok(Json(json!({ "path": path, "rev": rev })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(layer_file_name("labeled_data"), "labeled_data.annot.json");
        assert_eq!(layer_file_name("../etc/passwd"), "_etc_passwd.annot.json");
        assert_eq!(layer_file_name("a b/c"), "a_b_c.annot.json");
        assert_eq!(layer_file_name("..."), "layer.annot.json");
    }

    #[test]
    fn ranges_and_label_choice() {
        assert_eq!(check_range(None, 10).unwrap(), 0..=9);
        assert!(check_range(Some([4, 2]), 10).is_err());
        assert!(check_range(Some([0, 10]), 10).is_err());
        assert_eq!(label_choice(Some("a".into()), false).unwrap().as_deref(), Some("a"));
        assert_eq!(label_choice(None, true).unwrap(), None);
        assert!(label_choice(None, false).is_err());
        assert!(label_choice(Some("a".into()), true).is_err());
    }
}
