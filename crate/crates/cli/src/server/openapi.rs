use serde_json::{json, Value};

fn op(summary: &str, params: &[&str], body: Option<Value>, ok: (&str, &str)) -> Value {
    let mut o = json!({
        "summary": summary,
        "parameters": params.iter().map(|p| param(p)).collect::<Vec<_>>(),
        "responses": {
            ok.0: { "description": ok.1 },
            "404": { "description": "unknown layer, label, frame or job" },
            "422": { "description": "validation error with field-level messages", "content": json_content(error_schema()) },
        },
    });
    if let Some(schema) = body {
        o["requestBody"] = json!({ "required": true, "content": json_content(schema) });
    }
    o
}

fn mutating(summary: &str, params: &[&str], body: Option<Value>, ok: (&str, &str)) -> Value {
    let mut o = op(summary, params, body, ok);
    o["parameters"].as_array_mut().unwrap().push(json!({
        "name": "If-Match",
        "in": "header",
        "required": false,
        "description": "expected layer revision; a stale value yields 409",
        "schema": { "type": "string" },
    }));
    o["responses"]["409"] = json!({ "description": "stale revision", "content": json_content(error_schema()) });
    o
}

fn param(name: &str) -> Value {
    let ty = if matches!(name, "i" | "frame" | "id") { "integer" } else { "string" };
    json!({ "name": name, "in": "path", "required": true, "schema": { "type": ty } })
}

fn json_content(schema: Value) -> Value {
    json!({ "application/json": { "schema": schema } })
}

fn error_schema() -> Value {
    json!({
        "type": "object",
        "required": ["error"],
        "properties": {
            "error": { "type": "string" },
            "fields": { "type": "object", "additionalProperties": { "type": "string" } },
            "rev": { "type": "integer" },
        },
    })
}

fn object(required: &[&str], props: Value) -> Value {
    json!({ "type": "object", "required": required, "properties": props, "additionalProperties": false })
}

fn range() -> Value {
    json!({ "type": "array", "items": { "type": "integer", "minimum": 0 }, "minItems": 2, "maxItems": 2 })
}

/// OpenAPI 3 description of the service.
pub fn document() -> Value {
    let s = json!({ "type": "string" });
    let n = json!({ "type": "number" });
    let i = json!({ "type": "integer", "minimum": 0 });
    let b = json!({ "type": "boolean" });
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "ustrack annotation service",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "servers": [{ "url": "http://127.0.0.1:8472" }],
        "paths": {
            "/api/meta": { "get": op("sequence metadata: frames, fps, width, height, mm_per_px", &[], None, ("200", "metadata")) },
            "/api/frame/{i}": { "get": op("frame as PNG", &["i"], None, ("200", "image/png bytes")) },
            "/api/layers": {
                "get": op("list layers with revision, labels and dirty flag", &[], None, ("200", "layer list")),
                "post": op("create an empty layer", &[], Some(object(&["name"], json!({ "name": s }))), ("201", "created")),
            },
            "/api/layers/{layer}/labels": {
                "post": mutating("declare a label", &["layer"], Some(object(&["label"], json!({ "label": s }))), ("201", "created")),
            },
            "/api/layers/{layer}/labels/{label}": {
                "get": op("sparse trajectory of a label", &["layer", "label"], None, ("200", "points ordered by frame")),
            },
            "/api/layers/{layer}/labels/{label}/frames/{frame}": {
                "put": mutating("set a point", &["layer", "label", "frame"], Some(object(&["x", "y"], json!({ "x": n, "y": n }))), ("200", "stored point and new revision")),
                "delete": mutating("remove a point", &["layer", "label", "frame"], None, ("200", "new revision")),
            },
            "/api/layers/{layer}/annotated-frames": {
                "get": op("sorted frames holding at least one point", &["layer"], None, ("200", "frame indices")),
            },
            "/api/ops/guess": {
                "post": op("LK estimate from the nearest annotated frame; not stored", &[],
                    Some(object(&["layer", "label", "frame"], json!({ "layer": s, "label": s, "frame": i }))),
                    ("200", "{x, y, status, source_frame}")),
            },
            "/api/ops/interpolate": {
                "post": mutating("fill gaps between annotated frames with tracklets", &[],
                    Some(object(&["layer"], json!({ "layer": s, "label": s, "all": b, "range": range(), "overwrite": b, "alpha": n }))),
                    ("200", "{modified, rev}")),
            },
            "/api/ops/trim": {
                "post": mutating("drop frames missing any expected label", &[],
                    Some(object(&["layer", "expected"], json!({ "layer": s, "expected": { "type": "array", "items": s } }))),
                    ("200", "{removed, rev}")),
            },
            "/api/ops/copy": {
                "post": mutating("copy points between layers; If-Match applies to dst", &[],
                    Some(object(&["src", "dst"], json!({ "src": s, "dst": s, "range": range(), "label": s, "all": b }))),
                    ("200", "{copied, rev}")),
            },
            "/api/ops/filter": {
                "post": op("start a jitter-filter job writing layer `<layer>_lkrstc`", &[],
                    Some(object(&["layer"], json!({
                        "layer": s,
                        "window": { "oneOf": [
                            object(&["frames"], json!({ "frames": i })),
                            object(&["seconds"], json!({ "seconds": n })),
                        ]},
                        "alpha": n,
                        "labels": { "type": "array", "items": s },
                    }))),
                    ("202", "{job, layer, window_frames}")),
            },
            "/api/jobs/{id}": {
                "get": op("job status", &["id"], None, ("200", "{id, state: running|done|failed, progress, layer, error}")),
            },
            "/api/save": {
                "post": op("write a layer file to the session's save directory", &[],
                    Some(object(&["layer"], json!({ "layer": s }))), ("200", "{path, rev}")),
            },
        },
    })
}
