#include "asurv/service.hpp"

namespace asurv {

namespace {

constexpr const char* kOpenApi = R"json({
  "openapi": "3.0.3",
  "info": {
    "title": "asurv risk service",
    "version": "1",
    "description": "Posterior risk of the latent state for submitted patients, with what-if scenarios and trajectory bands."
  },
  "servers": [{"url": "/v1"}],
  "paths": {
    "/patients": {
      "post": {
        "summary": "Register a patient for this session",
        "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Patient"}}}},
        "responses": {
          "201": {"description": "Session token", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Token"}}}},
          "400": {"$ref": "#/components/responses/Error"},
          "422": {"$ref": "#/components/responses/Error"},
          "503": {"$ref": "#/components/responses/Error"}
        }
      }
    },
    "/patients/{token}/risk": {
      "get": {
        "summary": "Importance-sampling risk for a registered patient",
        "parameters": [{"$ref": "#/components/parameters/Token"}],
        "responses": {
          "200": {"description": "Prediction", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/PredictionReport"}}}},
          "404": {"$ref": "#/components/responses/Error"},
          "422": {"$ref": "#/components/responses/Error"},
          "503": {"$ref": "#/components/responses/Error"}
        }
      }
    },
    "/patients/{token}/whatif": {
      "post": {
        "summary": "Base and scenario risk after hypothetical events",
        "parameters": [{"$ref": "#/components/parameters/Token"}],
        "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/WhatIfScenario"}}}},
        "responses": {
          "200": {"description": "Base and scenario predictions", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/WhatIfResult"}}}},
          "400": {"$ref": "#/components/responses/Error"},
          "404": {"$ref": "#/components/responses/Error"},
          "422": {"$ref": "#/components/responses/Error"},
          "503": {"$ref": "#/components/responses/Error"}
        }
      }
    },
    "/model/meta": {
      "get": {
        "summary": "Model card of the loaded posterior store",
        "responses": {
          "200": {"description": "Model card", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/ModelMeta"}}}},
          "503": {"$ref": "#/components/responses/Error"}
        }
      }
    },
    "/openapi.json": {
      "get": {"summary": "This document", "responses": {"200": {"description": "OpenAPI document"}}}
    }
  },
  "components": {
    "parameters": {
      "Token": {"name": "token", "in": "path", "required": true, "schema": {"type": "string"}}
    },
    "responses": {
      "Error": {"description": "Error envelope", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}}
    },
    "schemas": {
      "Error": {
        "type": "object",
        "required": ["code", "message", "fields"],
        "properties": {
          "code": {"type": "string"},
          "message": {"type": "string"},
          "fields": {"type": "array", "items": {"type": "object", "properties": {"field": {"type": "string"}, "message": {"type": "string"}}}}
        }
      },
      "Token": {
        "type": "object",
        "properties": {
          "token": {"type": "string"},
          "provisional": {"type": "boolean"},
          "validation_warnings": {"type": "array", "items": {"type": "object"}}
        }
      },
      "PsaEntry": {
        "type": "object",
        "required": ["age", "psa"],
        "properties": {"age": {"type": "number"}, "psa": {"type": "number", "exclusiveMinimum": 0}, "volume": {"type": "number", "exclusiveMinimum": 0}}
      },
      "Interval": {
        "type": "object",
        "required": ["interval_index", "date", "biopsy_performed", "num_prev_biopsies"],
        "properties": {
          "interval_index": {"type": "integer", "minimum": 1},
          "date": {"type": "string", "format": "date"},
          "biopsy_performed": {"type": "boolean"},
          "biopsy_count": {"type": "integer", "minimum": 0, "maximum": 2},
          "reclassified": {"type": "boolean", "nullable": true},
          "surgery": {"type": "boolean"},
          "num_prev_biopsies": {"type": "number"},
          "prev_reclass": {"type": "boolean"},
          "max_prev_pos_cores": {"type": "number", "nullable": true},
          "max_prev_pct_pos": {"type": "number", "nullable": true},
          "time_since_dx": {"type": "number"},
          "age": {"type": "number"}
        }
      },
      "Patient": {
        "type": "object",
        "required": ["psa"],
        "properties": {
          "patient_id": {"type": "string"},
          "prostate_volume": {"type": "number", "exclusiveMinimum": 0},
          "psa": {"type": "array", "items": {"$ref": "#/components/schemas/PsaEntry"}},
          "intervals": {"type": "array", "items": {"$ref": "#/components/schemas/Interval"}},
          "eta_observed": {"type": "integer", "enum": [0, 1], "nullable": true}
        }
      },
      "Trajectory": {
        "type": "object",
        "properties": {
          "ages": {"type": "array", "items": {"type": "number"}},
          "levels": {"type": "array", "items": {"type": "number"}},
          "log_psa": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
          "reclass": {"type": "array", "nullable": true, "items": {"type": "array", "items": {"type": "number"}}},
          "reclass_note": {"type": "string"}
        }
      },
      "PredictionReport": {
        "type": "object",
        "properties": {
          "patient_id": {"type": "string"},
          "method": {"type": "string", "enum": ["augmented", "importance", "loo_refit"]},
          "posterior_p_eta": {"type": "object", "properties": {"mean": {"type": "number"}, "lower": {"type": "number"}, "upper": {"type": "number"}}},
          "n_draws": {"type": "integer"},
          "effective_sample_size": {"type": "number", "nullable": true},
          "ess_flagged": {"type": "boolean"},
          "warnings": {"type": "array", "items": {"type": "string"}},
          "trajectory": {"$ref": "#/components/schemas/Trajectory"}
        }
      },
      "WhatIfScenario": {
        "type": "object",
        "additionalProperties": false,
        "properties": {
          "psa": {"type": "array", "items": {"type": "object", "required": ["age", "psa"], "properties": {"age": {"type": "number"}, "psa": {"type": "number"}}}},
          "biopsy_result": {"type": "boolean", "nullable": true},
          "skip_biopsy": {"type": "boolean"},
          "surgery": {"type": "boolean", "nullable": true}
        }
      },
      "WhatIfResult": {
        "type": "object",
        "properties": {
          "base": {"$ref": "#/components/schemas/PredictionReport"},
          "scenario": {"$ref": "#/components/schemas/PredictionReport"},
          "delta": {"type": "number"},
          "request": {"$ref": "#/components/schemas/WhatIfScenario"}
        }
      },
      "ModelMeta": {
        "type": "object",
        "properties": {
          "fingerprint": {"type": "string"},
          "iop": {"type": "string", "enum": ["none", "b", "s", "bs"]},
          "engine_version": {"type": "string"},
          "draws": {"type": "object"},
          "covariates": {"type": "array"},
          "priors": {"type": "object"}
        }
      }
    }
  }
})json";

}  // namespace

const nlohmann::json& RiskService::openapi() {
  static const nlohmann::json doc = nlohmann::json::parse(kOpenApi);
  return doc;
}

}  // namespace asurv
