//
// Copyright 2026 The DP-CL Authors
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

#pragma once

#include "dpcl/accountant.hpp"
#include "dpcl/cli.hpp"
#include "dpcl/dp.hpp"
#include "dpcl/error.hpp"
#include "dpcl/memory.hpp"
#include "dpcl/metrics.hpp"
#include "dpcl/nn.hpp"
#include "dpcl/param_vector.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/task_data.hpp"
#include "dpcl/trainer.hpp"
