# Services 模块: 合成数据, 防御变换, 评分器, 训练, 攻击, 指标, 实验运行
