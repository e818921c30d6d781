#pragma once

#include "temposurv/autodiff.hpp"
#include "temposurv/config.hpp"
#include "temposurv/contrastive.hpp"
#include "temposurv/data.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/gradcheck.hpp"
#include "temposurv/losses.hpp"
#include "temposurv/metrics.hpp"
#include "temposurv/model.hpp"
#include "temposurv/ontology.hpp"
#include "temposurv/ontology_encoder.hpp"
#include "temposurv/rng.hpp"
#include "temposurv/sequence_encoder.hpp"
#include "temposurv/survival.hpp"
#include "temposurv/synthetic.hpp"
#include "temposurv/training.hpp"
