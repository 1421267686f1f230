// Copyright 2026 The hubcast Developers
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except
// in compliance with the License. You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under
// the License.

use thiserror::Error;

/// Errors produced by the simulator, protocol builders and circuit tooling.
#[derive(Debug, Error)]
pub enum HubError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HubError>;

pub(crate) fn argument(msg: impl Into<String>) -> HubError {
    HubError::Argument(msg.into())
}
