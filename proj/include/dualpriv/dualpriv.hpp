//
// Copyright 2026 The dualpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DUALPRIV_DUALPRIV_HPP_
#define DUALPRIV_DUALPRIV_HPP_

#include "dualpriv/accountant.hpp"
#include "dualpriv/eval.hpp"
#include "dualpriv/io.hpp"
#include "dualpriv/models.hpp"
#include "dualpriv/numeric.hpp"
#include "dualpriv/optimizers.hpp"
#include "dualpriv/token_pruner.hpp"

#endif  // DUALPRIV_DUALPRIV_HPP_
