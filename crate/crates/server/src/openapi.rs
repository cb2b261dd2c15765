use serde_json::{json, Map, Value};

use crate::routes::{Access, ROUTES};

fn path_params(path: &str) -> Vec<&str> {
    path.split('/')
        .filter_map(|seg| seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')))
        .collect()
}

/// OpenAPI 3 description generated from the route table.
pub fn document() -> Value {
    let mut paths = Map::new();
    for r in ROUTES {
        let params: Vec<Value> = path_params(r.path)
            .into_iter()
            .map(|name| json!({ "name": name, "in": "path", "required": true, "schema": { "type": "string" } }))
            .collect();
        let mut op = json!({
            "summary": r.summary,
            "x-access": r.access.as_str(),
            "responses": {
                "2XX": { "description": "Success" },
                "default": {
                    "description": "Problem document",
                    "content": { "application/problem+json": { "schema": { "$ref": "#/components/schemas/Problem" } } }
                }
            }
        });
        if !params.is_empty() {
            op["parameters"] = Value::Array(params);
        }
        if r.access != Access::Public {
            op["security"] = json!([{ "bearer": [] }]);
        }
        let entry = paths
            .entry(format!("/v1{}", r.path))
            .or_insert_with(|| Value::Object(Map::new()));
        entry[r.method.to_lowercase()] = op;
    }
    json!({
        "openapi": "3.0.3",
        "info": { "title": "votelab API", "version": env!("CARGO_PKG_VERSION") },
        "paths": paths,
        "components": {
            "securitySchemes": { "bearer": { "type": "http", "scheme": "bearer" } },
            "schemas": {
                "Problem": {
                    "type": "object",
                    "required": ["status", "code", "message"],
                    "properties": {
                        "status": { "type": "integer" },
                        "code": { "type": "string" },
                        "message": { "type": "string" },
                        "field": { "type": "string" },
                        "errors": { "type": "array", "items": { "type": "object" } }
                    }
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_route_is_described() {
        let doc = document();
        for r in ROUTES {
            let op = &doc["paths"][format!("/v1{}", r.path)][r.method.to_lowercase()];
            assert_eq!(op["summary"], r.summary, "{} {}", r.method, r.path);
        }
        let ballot = &doc["paths"]["/v1/campaigns/{id}/ballot/{question}/{method}"]["post"];
        assert_eq!(ballot["parameters"].as_array().unwrap().len(), 3);
        assert!(doc["paths"]["/v1/health"]["get"].get("security").is_none());
    }
}
