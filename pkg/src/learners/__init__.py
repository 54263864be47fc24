# Tree Learners Module
