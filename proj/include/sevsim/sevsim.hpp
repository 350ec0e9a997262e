#pragma once

#include "sevsim/annotate.hpp"
#include "sevsim/backend.hpp"
#include "sevsim/config.hpp"
#include "sevsim/conversation.hpp"
#include "sevsim/dataset.hpp"
#include "sevsim/detect.hpp"
#include "sevsim/errors.hpp"
#include "sevsim/eval.hpp"
#include "sevsim/persona.hpp"
#include "sevsim/pipeline.hpp"
#include "sevsim/simulator.hpp"
