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

fn main() {
    let mut stderr = std::io::stderr();
    if let Err(e) = hubcast::cli::configure_threads() {
        use std::io::Write;
        let _ = writeln!(stderr, "error: {e}");
        std::process::exit(hubcast::cli::EXIT_USAGE);
    }
    let code = hubcast::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut stderr);
    std::process::exit(code);
}
