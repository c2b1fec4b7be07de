#pragma once

#include "explaingrade/augment.hpp"
#include "explaingrade/classify.hpp"
#include "explaingrade/corpus.hpp"
#include "explaingrade/embed.hpp"
#include "explaingrade/errors.hpp"
#include "explaingrade/eval.hpp"
#include "explaingrade/judge.hpp"
#include "explaingrade/prompts.hpp"
#include "explaingrade/providers.hpp"
#include "explaingrade/util.hpp"
