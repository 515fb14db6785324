/*
Copyright 2026 The linksdf Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Small built-in robots used by the tests, benches and CLI demos.

use crate::robot::{RobotDescription, RobotModel};

pub const ARM3_JSON: &str = include_str!("../fixtures/arm3.json");
pub const ARM6_JSON: &str = include_str!("../fixtures/arm6.json");

/// Three revolute links with capsule and box geometry; the base link has no
/// collision geometry.
pub fn three_link_arm() -> RobotDescription {
    serde_json::from_str(ARM3_JSON).expect("arm3 fixture parses")
}

/// Six revolute joints, seven collision links, braking time 0.2 s.
pub fn six_dof_arm() -> RobotDescription {
    serde_json::from_str(ARM6_JSON).expect("arm6 fixture parses")
}

pub fn three_link_model() -> RobotModel {
    RobotModel::from_description(&three_link_arm(), None).expect("arm3 fixture is valid")
}

pub fn six_dof_model() -> RobotModel {
    RobotModel::from_description(&six_dof_arm(), None).expect("arm6 fixture is valid")
}
