// Copyright 2026 The KernelForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <mutex>

#include "kernelforge/calc.hpp"
#include "kernelforge/registry.hpp"

namespace kernelforge::registry {

void register_builtin_languages() {
  static std::once_flag once;
  std::call_once(once, [] {
    LanguageEntry calc;
    calc.entry = "calc";
    calc.language_name = "Calc";
    calc.display_name = "Calc";
    calc.factory = calc::make_repl;
    calc.mode = calc::mode();
    calc.info.name = "Calc";
    calc.info.version = "1.0";
    calc.info.mimetype = "text/x-calc";
    calc.info.file_extension = ".calc";
    calc.info.codemirror_mode = calc.mode.name;
    calc.info.banner = "Calc: integer expressions, assignments and `show <exp>`";
    register_language(std::move(calc));
  });
}

}  // namespace kernelforge::registry
