#pragma once

#include "deprompt/core.hpp"
#include "deprompt/desensitize.hpp"
#include "deprompt/errors.hpp"
#include "deprompt/evaluation.hpp"
#include "deprompt/gateway.hpp"
#include "deprompt/pipeline.hpp"
#include "deprompt/recognition.hpp"
#include "deprompt/rng.hpp"
#include "deprompt/textrank.hpp"
#include "deprompt/utf8.hpp"
