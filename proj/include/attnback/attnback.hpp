// attnback/attnback.hpp

// Copyright 2026  attnback authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Convenience header pulling in the whole library.

#pragma once

#include "attnback/attention.hpp"
#include "attnback/cosine.hpp"
#include "attnback/embeddings.hpp"
#include "attnback/grad_check.hpp"
#include "attnback/lda.hpp"
#include "attnback/metrics.hpp"
#include "attnback/numerics.hpp"
#include "attnback/objectives.hpp"
#include "attnback/plda.hpp"
#include "attnback/rng.hpp"
#include "attnback/synthetic.hpp"
#include "attnback/trainer.hpp"
#include "attnback/trials.hpp"
